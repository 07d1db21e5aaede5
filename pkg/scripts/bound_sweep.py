"""Check the comparison bound against exact discrepancies on random pairs of grid models."""

import argparse
from dataclasses import dataclass

import numpy as np

from gibbscomp import comparison as cmp
from gibbscomp.core import LocalFunction, StateSpace
from gibbscomp.oracle import grid_edges, jitter_model, normalize, random_pairwise_model


@dataclass
class Config:
    rows: int = 2
    cols: int = 3
    pairs: int = 200
    scale: float = 0.5
    jitter: float = 0.1
    seed: int = 1


def run(cfg: Config) -> dict:
    rng = np.random.default_rng(cfg.seed)
    n = cfg.rows * cfg.cols
    space = StateSpace((2,) * n)
    edges = grid_edges(cfg.rows, cfg.cols)
    covers = {"singletons": cmp.singleton_cover(n), "horizontal-pairs": cmp.horizontal_pair_cover(cfg.rows, cfg.cols)}
    fs = [LocalFunction.indicator(i, 1, 2) for i in range(n)]
    stats = {name: {"certified": 0, "checked": 0, "violations": 0, "ratios": []} for name in covers}
    for _ in range(cfg.pairs):
        model = random_pairwise_model(space, edges, rng, cfg.scale)
        rho, rho_t = normalize(model), normalize(jitter_model(model, rng, cfg.jitter))
        for name, cover in covers.items():
            rule = cmp.build_rule(rho, rho_t, cover)
            if not cmp.certify(rule, 3).passed:
                continue
            s = stats[name]
            s["certified"] += 1
            for f in fs:
                rep = cmp.main_bound(rule, f)
                s["checked"] += 1
                s["violations"] += rep.exact > rep.bound + 1e-9
                if rep.bound > 0:
                    s["ratios"].append(rep.exact / rep.bound)
    return stats


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--pairs", type=int, default=Config.pairs)
    p.add_argument("--jitter", type=float, default=Config.jitter)
    p.add_argument("--seed", type=int, default=Config.seed)
    a = p.parse_args()
    stats = run(Config(pairs=a.pairs, jitter=a.jitter, seed=a.seed))
    print("cover              certified  checked  violations  median exact/bound  max exact/bound")
    for name, s in stats.items():
        r = np.array(s["ratios"]) if s["ratios"] else np.zeros(1)
        print(f"{name:<18} {s['certified']:>9}  {s['checked']:>7}  {s['violations']:>10}  "
              f"{np.median(r):>18.3f}  {r.max():>15.3f}")


if __name__ == "__main__":
    main()
