"""Run a YAML config through the harness, write the report and summarize it, as the CLI does."""
import sys
import tempfile
from pathlib import Path

from lqglab.harness import load_config, run, summarize, write_report
from lqglab.harness.summary import rows_to_csv

cfg = load_config(Path(__file__).resolve().parent.parent / "configs" / "ac6_power2.yaml")
cfg.sample_count = 10
report = run(cfg, workers=2)
out = Path(tempfile.mkdtemp())
paths = write_report(report, out, "csv")
print({k: str(v) for k, v in paths.items()})
print(f"P[F] nondecreasing: {report.summary['p_F_nondecreasing']}, ratio IQR: {report.summary['ratio_iqr']}")
sys.stdout.write(rows_to_csv(summarize([paths["report"]])))
