"""Block particle filter sampling error against N, single block versus several blocks."""

import argparse
from dataclasses import dataclass, field

from gibbscomp import blockpf as bp
from gibbscomp.hmm import Partition, build_grid_model


@dataclass
class Config:
    sites: int = 4
    n: int = 5
    Ns: list = field(default_factory=lambda: [100, 400, 1600, 6400])
    replicates: int = 50
    eps: float = 0.9
    seed: int = 9
    threads: int = 4


def run(cfg: Config) -> dict:
    model = build_grid_model((cfg.sites,), r=1, eps=cfg.eps, delta_floor=0.5, kappa=0.5, seed=cfg.seed)
    parts = {"single": Partition.single(cfg.sites), "two-blocks": Partition.contiguous(cfg.sites, cfg.sites // 2),
             "singletons": Partition.contiguous(cfg.sites, 1)}
    return {name: bp.variance_experiment(model, part, cfg.n, cfg.Ns, cfg.replicates, obs_seed=cfg.seed,
                                         J=(0,), threads=cfg.threads)
            for name, part in parts.items()}


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--replicates", type=int, default=Config.replicates)
    p.add_argument("--threads", type=int, default=Config.threads)
    p.add_argument("--seed", type=int, default=Config.seed)
    a = p.parse_args()
    curves = run(Config(replicates=a.replicates, threads=a.threads, seed=a.seed))
    for name, curve in curves.items():
        print(f"{name}: log-log slope {curve.summary.get('slope', float('nan')):.3f}")
        for r in curve.rows:
            print(f"  N={r['N']:>6}  error {r['error']:.4e} +- {r['stderr']:.1e}")


if __name__ == "__main__":
    main()
