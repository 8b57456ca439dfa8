"""Four-mode mixture study: two-phase ERGD pipeline vs a pure-SVGD control.

Runs the bundled gm4 config, then the same plan with every phase forced to
SVGD, and prints the mode coverage of both. Outputs land in gm4_out/.
"""

from pathlib import Path

from povi import cli

CONFIG = Path(__file__).resolve().parent.parent / "configs" / "gm4.toml"


def main() -> int:
    print("== two-phase s-ERGD -> ERGD ==")
    rc = cli.main(["sample", "--config", str(CONFIG), "--out", "gm4_out"])
    if rc != 0:
        return rc
    print("== pure SVGD control ==")
    return cli.main(
        ["sample", "--config", str(CONFIG), "--rule", "svgd", "--out", "gm4_svgd_out"]
    )


if __name__ == "__main__":
    raise SystemExit(main())
