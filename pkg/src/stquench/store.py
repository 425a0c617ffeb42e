"""Result store: CSV series, JSON manifests, per-run locks, checkpoints.

Schemas are fixed: energy.csv(t,E,E0,eps), local_energy.csv(t,x,y,eps_xy),
correlations.csv(t,r,cx), entropy.csv(t,xbond,svn).  Floats are written
with 17 significant digits so write-then-read round-trips exactly; a
`# source:` comment line tags simulation vs oracle vs theory data.
"""

import hashlib
import json
import os
import platform
import subprocess
import time

import numpy as np
from filelock import FileLock, Timeout

from .driver import ObservableSeries

SCHEMA_VERSION = 1
UNITS_LINE = "# units: energy=J time=1/J length=lattice"

SCHEMAS = {
    "energy": ("t", "E", "E0", "eps"),
    "local_energy": ("t", "x", "y", "eps_xy"),
    "correlations": ("t", "r", "cx"),
    "entropy": ("t", "xbond", "svn"),
    "truncation": ("t", "max_discard", "max_chi"),
}


def fmt(x):
    return "%.17g" % float(x)


class RunLockError(RuntimeError):
    pass


class RunDirectory:
    """One run's output directory, guarded by a lock file."""

    def __init__(self, path):
        self.path = str(path)
        os.makedirs(self.path, exist_ok=True)
        self._lock = FileLock(os.path.join(self.path, ".lock"))

    def __enter__(self):
        try:
            self._lock.acquire(timeout=0.5)
        except Timeout as exc:
            raise RunLockError(f"run directory {self.path} is locked by "
                               "another writer") from exc
        return self

    def __exit__(self, *exc_info):
        self._lock.release()

    def file(self, name):
        return os.path.join(self.path, name)


def write_csv(path, header, rows, source="simulation"):
    with open(path, "w") as fh:
        fh.write(f"# schema: v{SCHEMA_VERSION} source: {source}\n")
        fh.write(UNITS_LINE + "\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt(x) for x in row) + "\n")


def read_csv(path):
    """Returns (header tuple, rows as float tuples, source tag)."""
    source = "unknown"
    rows = []
    header = None
    with open(path) as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line.startswith("#"):
                if "schema:" in line:
                    tag = line.split("schema:", 1)[1].strip()
                    version = tag.split()[0]
                    if version != f"v{SCHEMA_VERSION}":
                        raise ValueError(
                            f"{path}: schema {version} needs migration; this "
                            f"build reads v{SCHEMA_VERSION}")
                if "source:" in line:
                    source = line.split("source:", 1)[1].strip()
                continue
            if header is None:
                header = tuple(line.split(","))
                continue
            if line:
                rows.append(tuple(float(x) for x in line.split(",")))
    return header, rows, source


def write_series(run_dir, series, source="simulation", prefix=""):
    """Write every populated table of an ObservableSeries."""
    written = []
    for name, header in SCHEMAS.items():
        rows = getattr(series, name, None)
        if not rows:
            continue
        path = run_dir.file(f"{prefix}{name}.csv")
        write_csv(path, header, rows, source=source)
        written.append(path)
    return written


def read_series(run_dir, prefix=""):
    series = ObservableSeries()
    for name in SCHEMAS:
        path = run_dir.file(f"{prefix}{name}.csv")
        if not os.path.exists(path):
            continue
        _, rows, _ = read_csv(path)
        if name == "truncation":
            rows = [(t, d, int(c)) for t, d, c in rows]
        setattr(series, name, rows)
    return series


def sha256_file(path):
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def code_version():
    from . import __version__
    version = {"package": __version__}
    try:
        rev = subprocess.run(["git", "rev-parse", "--short", "HEAD"],
                             capture_output=True, text=True, timeout=5,
                             cwd=os.path.dirname(__file__))
        if rev.returncode == 0:
            version["git"] = rev.stdout.strip()
    except Exception:
        pass
    return version


def host_info():
    return {
        "node": platform.node(),
        "platform": platform.platform(),
        "python": platform.python_version(),
        "numpy": np.__version__,
        "threads": os.environ.get("OMP_NUM_THREADS", "unset"),
    }


def write_manifest(run_dir, command, config_dict, extra=None, started=None):
    """Inventory every file in the run directory with checksums."""
    files = {}
    for name in sorted(os.listdir(run_dir.path)):
        if name in ("manifest.json", ".lock"):
            continue
        full = run_dir.file(name)
        if os.path.isfile(full):
            files[name] = sha256_file(full)
    manifest = {
        "command": command,
        "version": code_version(),
        "host": host_info(),
        "config": config_dict,
        "tq_convention": "tq = max_i |x_i| / v (front reaches the outermost site)",
        "wall_time_s": None if started is None else time.time() - started,
        "files": files,
    }
    if extra:
        manifest.update(extra)
    path = run_dir.file("manifest.json")
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")
    return path


def read_manifest(path_or_dir):
    path = path_or_dir
    if os.path.isdir(path):
        path = os.path.join(path, "manifest.json")
    with open(path) as fh:
        return json.load(fh)


def save_checkpoint(run_dir, psi, step, t, tag="checkpoint"):
    state_path = run_dir.file(f"{tag}.mps")
    psi.save(state_path)
    cursor = {"step": int(step), "t": float(t), "state": os.path.basename(state_path)}
    with open(run_dir.file(f"{tag}.json"), "w") as fh:
        json.dump(cursor, fh, indent=2)
    return state_path


def load_checkpoint(run_dir, tag="checkpoint"):
    from .mps import Mps
    with open(run_dir.file(f"{tag}.json")) as fh:
        cursor = json.load(fh)
    psi = Mps.load(run_dir.file(cursor["state"]))
    return psi, cursor
