"""Artifact writers: trace CSV, manifest/verdict JSON, suite markdown summary.

Nothing written here carries a timestamp, so repeated runs of the same
config produce byte-identical files.
"""

import csv
import json
import logging
import os

from jinja2 import Environment

log = logging.getLogger(__name__)

SUITE_TEMPLATE = """\
# Suite summary: {{ directory }}

**Result:** {{ "PASS" if passed else "FAIL" }} ({{ entries | selectattr("passed") | list | length }}/{{ entries | length }} experiments passed)

{% if entries %}
| Config | Kind | Result | Failed checks |
|---|---|---|---|
{% for e in entries %}
| `{{ e.file }}` | {{ e.kind or "-" }} | {{ "pass" if e.passed else "FAIL" }} | {{ e.error or (e.failed_tags | join(", ")) or "-" }} |
{% endfor %}
{% else %}
No experiment configs found.
{% endif %}
"""

_env = Environment(trim_blocks=True, lstrip_blocks=True, autoescape=False)


def _ensure_dir(path):
    os.makedirs(path, exist_ok=True)


def write_json(path, data):
    _ensure_dir(os.path.dirname(path) or ".")
    tmp = path + ".tmp"
    with open(tmp, "w") as f:
        json.dump(data, f, indent=2, sort_keys=True)
        f.write("\n")
    os.replace(tmp, path)


def _cell(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return value


def write_csv(path, columns, rows):
    """Write rows (dicts keyed by column) with a fixed header order."""
    _ensure_dir(os.path.dirname(path) or ".")
    tmp = path + ".tmp"
    with open(tmp, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(row.get(c)) for c in columns])
    os.replace(tmp, path)


def render_suite_markdown(report):
    return _env.from_string(SUITE_TEMPLATE).render(
        directory=report.directory,
        passed=report.passed,
        entries=report.entries,
    )


def write_text(path, text):
    _ensure_dir(os.path.dirname(path) or ".")
    tmp = path + ".tmp"
    with open(tmp, "w") as f:
        f.write(text)
    os.replace(tmp, path)


def write_run_artifacts(out_dir, name, columns, rows, manifest, verdict):
    """Write <name>_trace.csv, <name>_manifest.json and <name>_verdict.json."""
    paths = {
        "trace": os.path.join(out_dir, f"{name}_trace.csv"),
        "manifest": os.path.join(out_dir, f"{name}_manifest.json"),
        "verdict": os.path.join(out_dir, f"{name}_verdict.json"),
    }
    write_csv(paths["trace"], columns, rows)
    write_json(paths["manifest"], manifest)
    write_json(paths["verdict"], verdict)
    log.debug("wrote artifacts for %s to %s", name, out_dir)
    return paths
