"""Time the numba and numpy kernel backends on the same inputs.

    python3 benchmarks/bench_kernels.py [--reps 2000] [--horizon 500] [--repeat 3]

The first numba call per kernel (compilation or cache load) is excluded.
"""
import argparse
import time

import numpy as np

from repgame import kernels
from repgame.bounds import construct_deviation, survival_probabilities
from repgame.dynamics import discounted_frequency_concentration, replication_uniforms, simulate
from repgame.geometry import RegionSpec
from repgame.lambda_iteration import adversarial_profiles, grid_points
from repgame.scenarios import drift_profile, drift_scenario


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(reps, horizon):
    s = drift_scenario()
    prof = drift_profile(s)
    spec = RegionSpec.from_scenario(s, "theta_star", "alpha1star", chi=0.5)
    alpha = s.commitment_action("alpha1star")
    table = survival_probabilities(s, prof, alpha, spec, 0.1, horizon=60)
    plan = construct_deviation(table)
    _, U = replication_uniforms(0, range(reps), 60)
    rng = np.random.default_rng(0)
    x = rng.normal(size=(reps, horizon)).cumsum(axis=1)
    dims = np.array([81, 81])
    pts = grid_points(dims, 0.05)
    member = pts.sum(axis=1) < 3.0
    ratios = adversarial_profiles(alpha.probs, 2, 64)
    inv = 1.0 / rng.uniform(0.5, 4.0, size=(2000, 2))

    return {
        "simulate_paths": lambda b: simulate(s, prof, horizon=horizon, reps=reps, true_type="commitment:alpha1star",
                                             alpha=alpha, spec=spec, record=False, backend=b),
        "discounted_frequencies": lambda b: discounted_frequency_concentration(alpha, 0.99, reps=reps, etas=(0.1,),
                                                                               backend=b),
        "count_upcrossings": lambda b: kernels.get_backend(b).count_upcrossings(x, -1.0, 1.0),
        "walk_tree": lambda b: kernels.get_backend(b).walk_tree(U, table.graph.child, plan.probs,
                                                                table.graph.p2_dist, 0),
        "cover_by_simplices": lambda b: kernels.get_backend(b).cover_by_simplices(pts, inv, member),
        "informative_hat_check": lambda b: kernels.get_backend(b).informative_hat_check(pts, ratios, 0.2, member,
                                                                                        dims, 0.05),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--reps", type=int, default=2000)
    ap.add_argument("--horizon", type=int, default=500)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    backends = ["numpy"] + (["numba"] if kernels.numba_available() else [])
    print(f"reps={args.reps} horizon={args.horizon} best of {args.repeat}")
    print(f"{'kernel':<24}" + "".join(f"{b:>12}" for b in backends) + f"{'speedup':>10}")
    for name, fn in cases(args.reps, args.horizon).items():
        t = {b: best_of(lambda: fn(b), args.repeat) for b in backends}
        speed = f"{t['numpy'] / t['numba']:>9.1f}x" if "numba" in t else ""
        print(f"{name:<24}" + "".join(f"{t[b]:>11.4f}s" for b in backends) + speed)


if __name__ == "__main__":
    main()
