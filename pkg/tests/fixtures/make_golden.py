"""Regenerate golden_default.json from a sequential run of the default config.

Only rerun this after an intentional change to the numerics.
"""
import json
import sys
import tempfile
from pathlib import Path

from cabinacoustics.pipeline import file_digests, parse_config, run_pipeline


def main():
    with tempfile.TemporaryDirectory() as tmp:
        res = run_pipeline(parse_config("").sequential(), tmp)
        golden = {
            "f_peak_hz": res.f_peak,
            "peak_bin": res.peak_bin,
            "iterations": res.report.iterations,
            "digests": file_digests(sorted(res.artifacts)),
        }
    out = Path(__file__).with_name("golden_default.json")
    out.write_text(json.dumps(golden, indent=2, sort_keys=True) + "\n")
    print(f"wrote {out}", file=sys.stderr)


if __name__ == "__main__":
    main()
