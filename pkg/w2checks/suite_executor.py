"""Suite executor - runs every experiment config in a directory."""
import glob
import logging
import os
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from config.settings import Config
from w2checks.experiment_config import ConfigError, load_config
from w2checks.experiment_runner import NUMERICAL_ERRORS, run
from w2checks.report_writer import render_suite_markdown, write_json, write_text

log = logging.getLogger(__name__)

_progress_lock = threading.Lock()


@dataclass
class SuiteEntry:
    file: str
    name: str = None
    kind: str = None
    passed: bool = False
    failed_tags: list = field(default_factory=list)
    error: str = None
    error_kind: str = None   # "config" or "numerical"

    def to_dict(self):
        return {
            "file": self.file,
            "name": self.name,
            "kind": self.kind,
            "passed": self.passed,
            "failed_tags": self.failed_tags,
            "error": self.error,
            "error_kind": self.error_kind,
        }


@dataclass
class SuiteReport:
    directory: str
    entries: list = field(default_factory=list)

    @property
    def passed(self):
        return all(e.passed for e in self.entries)

    @property
    def config_errors(self):
        return [e for e in self.entries if e.error_kind == "config"]

    @property
    def numerical_errors(self):
        return [e for e in self.entries if e.error_kind == "numerical"]

    def to_dict(self):
        return {
            "directory": self.directory,
            "passed": self.passed,
            "total": len(self.entries),
            "failed": sum(1 for e in self.entries if not e.passed),
            "entries": [e.to_dict() for e in self.entries],
        }


def _run_one(path, out_dir, tolerance_scale, done, total):
    """Run a single config; every failure mode becomes a failed entry."""
    entry = SuiteEntry(file=os.path.basename(path))
    try:
        config = load_config(path, tolerance_scale=tolerance_scale)
        entry.name, entry.kind = config.name, config.kind
        verdict = run(config, out_dir).verdict
        entry.passed = verdict.passed
        entry.failed_tags = verdict.failed_tags
    except (ConfigError, OSError) as exc:
        log.error("Suite config %s rejected: %s", entry.file, exc)
        entry.error, entry.error_kind = str(exc), "config"
    except NUMERICAL_ERRORS as exc:
        log.error("Suite config %s failed numerically: %s", entry.file, exc)
        entry.error, entry.error_kind = f"{type(exc).__name__}: {exc}", "numerical"
    with _progress_lock:
        done[0] += 1
        log.info("[%d/%d] %s %s", done[0], total, entry.file, "pass" if entry.passed else "FAIL")
    return entry


def run_suite(directory, out_dir=None, tolerance_scale=1.0, max_workers=None):
    """Run all *.json configs in directory; results come back in file order."""
    if not os.path.isdir(directory):
        raise ConfigError("suite directory does not exist", path=directory)
    out_dir = out_dir or Config.OUTPUT_DIR
    paths = sorted(glob.glob(os.path.join(directory, "*.json")))
    log.info("Suite %s: %d config(s)", directory, len(paths))

    done = [0]
    workers = max(1, max_workers or Config.MAX_CONCURRENT_RUNS)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(_run_one, p, out_dir, tolerance_scale, done, len(paths)) for p in paths]
        entries = [f.result() for f in futures]

    report = SuiteReport(directory=os.path.basename(os.path.normpath(directory)), entries=entries)
    write_json(os.path.join(out_dir, "suite_summary.json"), report.to_dict())
    write_text(os.path.join(out_dir, "suite_summary.md"), render_suite_markdown(report))
    return report
