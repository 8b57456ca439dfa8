"""Standard-normal sanity sweep: final MMD^2 for each update rule.

Uses the bundled standard_normal config and overrides the rule per run.
"""

from pathlib import Path

from povi import experiments, io

CONFIG = Path(__file__).resolve().parent.parent / "configs" / "standard_normal.toml"


def main() -> int:
    cfg = io.parse_run_config(CONFIG.read_text())
    for rule in sorted(experiments.RULE_NAMES):
        run_cfg = experiments.apply_overrides(cfg, rule=rule)
        report, _ = experiments.run_sample(run_cfg)
        print(f"{rule:8s}  mmd2 = {report.metrics['mmd2']: .6f}  ({report.wall_clock:.2f} s)")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
