"""Two-moons BNN diversity study: ERGD vs SVGD over five seeds.

Aggregates accuracy, NLL, and the OOD/test entropy and disagreement ratios
into a text table. Outputs land in two_moons_compare/.
"""

from pathlib import Path

from povi import cli

CONFIG = Path(__file__).resolve().parent.parent / "configs" / "two_moons.toml"


def main() -> int:
    return cli.main(
        [
            "compare",
            "--config",
            str(CONFIG),
            "--rules",
            "ergd,svgd",
            "--seeds",
            "0,1,2,3,4",
            "--out",
            "two_moons_compare",
        ]
    )


if __name__ == "__main__":
    raise SystemExit(main())
