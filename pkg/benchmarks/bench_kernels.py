"""Time the hot kernels on the numba and numpy backends.

Each backend runs in its own interpreter because ``FGASH_BACKEND`` is read at
import time. Every kernel is called once untimed so JIT compilation is excluded.

    python benchmarks/bench_kernels.py [--eps 0.0625] [--M 4] [--t 0.25] [--repeat 3]
"""
import argparse
import json
import os
import subprocess
import sys
import time


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def child(args):
    import numpy as np

    from fgash._backend import BACKEND
    from fgash.config import RunConfig
    from fgash.experiments import initial_field, start_ensemble
    from fgash.reconstruct import assemble
    from fgash.sampling import amplitude_field

    cfg = RunConfig(epsilon=args.eps, t_final=args.t, M=(args.M,), replications=1).validate()
    model = cfg.potential()
    field = initial_field(cfg)
    xm = cfg.x_mesh()
    state = {}

    def trajectories():
        ens = start_ensemble(cfg, field, args.M, 0)
        state["ens"] = ens.advance_to(cfg.t_final, cfg.step, model)

    def beams():
        assemble(state["ens"], field.prefactor, xm, cfg.epsilon)

    def amplitudes():
        amplitude_field(cfg.initial_packet(), cfg.phase_mesh(), xm, cfg.epsilon)

    out = {"backend": BACKEND,
           "trajectories": best_of(trajectories, args.repeat),
           "assembly": best_of(beams, args.repeat),
           "amplitude_field": best_of(amplitudes, args.repeat),
           "n_traj": int(len(state["ens"])),
           "n_steps": int(np.ceil(cfg.t_final / cfg.step - 1e-9))}
    print(json.dumps(out))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--eps", type=float, default=1 / 16)
    ap.add_argument("--M", type=int, default=4)
    ap.add_argument("--t", type=float, default=0.25)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--child", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args()
    if args.child:
        child(args)
        return

    results = {}
    for backend in ("numba", "numpy"):
        env = dict(os.environ, FGASH_BACKEND=backend)
        cmd = [sys.executable, __file__, "--child", "--eps", repr(args.eps), "--M", str(args.M),
               "--t", repr(args.t), "--repeat", str(args.repeat)]
        proc = subprocess.run(cmd, env=env, capture_output=True, text=True, check=True)
        results[backend] = json.loads(proc.stdout.strip().splitlines()[-1])

    nb, npy = results["numba"], results["numpy"]
    print(f"eps={args.eps:g} M={args.M} t={args.t:g}: "
          f"{nb['n_traj']} trajectories x {nb['n_steps']} steps")
    print(f"{'kernel':<16}{'numba [s]':>12}{'numpy [s]':>12}{'speedup':>10}")
    for k in ("trajectories", "assembly", "amplitude_field"):
        print(f"{k:<16}{nb[k]:>12.4f}{npy[k]:>12.4f}{npy[k] / nb[k]:>10.1f}")


if __name__ == "__main__":
    main()
