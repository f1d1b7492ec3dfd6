#!/usr/bin/env python3
"""Sweep the asymptotic-regime diagnostics over every built-in preset and
print a verdict table; optionally dump the full sample paths as JSON.

Diagnostics horizons clip automatically where a preset's rates leave the
double range (geometric clips hard, stretched and loglog partially), so
every reported ratio is finite by construction.
"""

import argparse
import json
import sys

from cdi.rate_models import PRESET_NAMES, preset
from cdi.tail_analysis import condition_diagnostics

# parameters for presets that require them
PRESET_ARGS = {
    "logpow": {"a": 1.0},
    "polytail": {"c": 1.0, "beta": 2.5},
    "stretched": {"rho": 0.5},
}


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--horizon", type=int, default=1_000_000)
    ap.add_argument("--points", type=int, default=40)
    ap.add_argument("--json", dest="json_out",
                    help="write the full diagnostics to this file")
    args = ap.parse_args(argv)

    dump = {}
    for name in PRESET_NAMES:
        model = preset(name, **PRESET_ARGS.get(name, {}))
        reports = condition_diagnostics(model, horizon=args.horizon,
                                        n_points=args.points)
        dump[name] = {k: r.to_json_dict() for k, r in reports.items()}
        print(f"{name}:")
        for key in sorted(reports):
            r = reports[key]
            last = r.samples[-1][1] if r.samples else float("nan")
            print(f"  {key:12s} verdict={r.verdict:12s} "
                  f"horizon={r.horizon:<9d} last={last:.6g}")

    if args.json_out:
        with open(args.json_out, "w", encoding="utf-8") as fh:
            json.dump(dump, fh, indent=2, sort_keys=True)
            fh.write("\n")
        print(f"wrote {args.json_out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
