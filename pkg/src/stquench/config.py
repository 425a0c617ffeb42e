"""Run configuration: flat dotted-key text files with strict key checking.

Format: one `section.key = value` per line, `#` comments, booleans as
true/false, lists comma-separated.  Unknown keys are rejected so typos
cannot silently change a run.  Defaults reproduce the standard setup:
h = 5 gc, Lx = 8 Ly, t0 = -2 tau, chi = 512, fourth-order integration.
"""

import math
import os
from dataclasses import dataclass, field as dc_field

from .analysis import pseudo_critical_field
from .lattice import CylinderLattice, ModelParams


class ConfigError(ValueError):
    pass


def _parse_bool(s):
    if s.lower() in ("true", "yes", "1", "on"):
        return True
    if s.lower() in ("false", "no", "0", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {s!r}")


def _parse_float(s):
    if s.lower() in ("inf", "infinity"):
        return math.inf
    try:
        return float(s)
    except ValueError as exc:
        raise ConfigError(f"expected a number, got {s!r}") from exc


def _parse_float_or_auto(s):
    if s.lower() == "auto":
        return "auto"
    return _parse_float(s)


def _parse_int(s):
    try:
        return int(s)
    except ValueError as exc:
        raise ConfigError(f"expected an integer, got {s!r}") from exc


def _parse_int_list(s):
    return tuple(_parse_int(x) for x in s.split(",") if x.strip())


def _parse_float_list(s):
    return tuple(_parse_float(x) for x in s.split(",") if x.strip())


def _parse_str(s):
    return s


def _parse_ly_map(s):
    """Ly:value pairs, e.g. '2:2.2,3:2.7'."""
    out = {}
    for item in s.split(","):
        item = item.strip()
        if not item:
            continue
        if ":" not in item:
            raise ConfigError(f"expected Ly:value pairs, got {item!r}")
        k, v = item.split(":", 1)
        out[_parse_int(k)] = _parse_float(v)
    return out


# key -> (parser, default)
KNOWN_KEYS = {
    "model.J": (_parse_float, 1.0),
    "model.gc": (_parse_float_or_auto, "auto"),
    "model.hFactor": (_parse_float, 5.0),
    "model.h": (_parse_float_or_auto, "auto"),
    "geometry.Ly": (_parse_int, 2),
    "geometry.Lx": (_parse_int, None),
    "geometry.aspect": (_parse_int, 8),
    "geometry.yPeriodic": (_parse_bool, True),
    "quench.v": (_parse_float, 3.0),
    "quench.tau": (_parse_float, 0.4),
    "quench.dt": (_parse_float, 0.05),
    "quench.order": (_parse_int, 4),
    "quench.tEnd": (_parse_float_or_auto, "auto"),
    "mps.chiMax": (_parse_int, 512),
    "mps.cutoff": (_parse_float, 1e-10),
    "dmrg.chiSchedule": (_parse_int_list, (16, 32, 64, 128)),
    "dmrg.cutoff": (_parse_float, 1e-12),
    "dmrg.maxSweeps": (_parse_int, 30),
    "dmrg.energyTol": (_parse_float, 1e-11),
    "dmrg.eigTol": (_parse_float, 1e-13),
    "dmrg.noise": (_parse_float_list, (1e-6, 1e-7, 0.0)),
    "schedule.scalarsEvery": (_parse_int, 1),
    "schedule.gridEvery": (_parse_int, 10),
    "schedule.correlations": (_parse_str, "end"),
    "schedule.checkpointEvery": (_parse_int, 0),
    "sweep.gValues": (_parse_float_list, ()),
    "lightcone.tEnd": (_parse_float, 2.0),
    "lightcone.kick": (_parse_str, "x"),
    "lightcone.site": (_parse_str, "auto"),
    "lightcone.threshold": (_parse_float_or_auto, "auto"),
    "heatwave.c": (_parse_float, 1.0),
    "heatwave.m": (_parse_float, 1.0),
    "heatwave.tau": (_parse_float, 0.0),
    "heatwave.vFactors": (_parse_float_list, (1.2, 1.5, 2.0, 3.0, 5.0, 10.0)),
    "heatwave.grid": (_parse_int, 400),
    "collapse.kind": (_parse_str, "energy"),
    "collapse.cByLy": (_parse_ly_map, {}),
    "collapse.fit": (_parse_bool, False),
    "output.dir": (_parse_str, None),
    "run.name": (_parse_str, None),
    "seed": (_parse_int, 12345),
    "resources.memoryCapMb": (_parse_float, 8192.0),
}

VALID_CORRELATION_MODES = ("end", "none")


@dataclass
class RunConfig:
    values: dict = dc_field(default_factory=dict)

    @classmethod
    def from_file(cls, path, overrides=()):
        values = {}
        with open(path) as fh:
            for lineno, raw in enumerate(fh, 1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{lineno}: expected key = value")
                key, val = (s.strip() for s in line.split("=", 1))
                cls._assign(values, key, val, f"{path}:{lineno}")
        cfg = cls(values)
        cfg.apply_overrides(overrides)
        cfg.validate()
        return cfg

    @classmethod
    def from_dict(cls, mapping):
        values = {}
        for key, val in mapping.items():
            cls._assign(values, key, str(val), "<dict>")
        cfg = cls(values)
        cfg.validate()
        return cfg

    @staticmethod
    def _assign(values, key, val, where):
        if key not in KNOWN_KEYS:
            raise ConfigError(f"{where}: unknown key {key!r}")
        parser, _ = KNOWN_KEYS[key]
        values[key] = parser(val)

    def apply_overrides(self, overrides):
        for item in overrides:
            if "=" not in item:
                raise ConfigError(f"override {item!r} must be key=value")
            key, val = (s.strip() for s in item.split("=", 1))
            self._assign(self.values, key, val, "<override>")
        self.validate()

    def get(self, key):
        if key not in KNOWN_KEYS:
            raise ConfigError(f"unknown key {key!r}")
        return self.values.get(key, KNOWN_KEYS[key][1])

    def validate(self):
        if self.get("quench.order") not in (2, 4):
            raise ConfigError("quench.order must be 2 or 4")
        if self.get("schedule.correlations") not in VALID_CORRELATION_MODES:
            raise ConfigError("schedule.correlations must be 'end' or 'none'")
        if self.get("geometry.Ly") < 1:
            raise ConfigError("geometry.Ly must be >= 1")
        if self.get("quench.dt") <= 0:
            raise ConfigError("quench.dt must be positive")

    # -- resolved quantities ------------------------------------------------

    def lx(self):
        lx = self.get("geometry.Lx")
        return int(lx) if lx is not None else self.get("geometry.aspect") * self.get("geometry.Ly")

    def lattice(self):
        return CylinderLattice(self.lx(), self.get("geometry.Ly"),
                               self.get("geometry.yPeriodic"))

    def gc(self):
        gc = self.get("model.gc")
        if gc == "auto":
            return pseudo_critical_field(self.get("geometry.Ly"))
        return float(gc)

    def h(self):
        h = self.get("model.h")
        if h == "auto":
            return self.get("model.hFactor") * self.gc()
        return float(h)

    def is_uniform_quench(self):
        return math.isinf(self.get("quench.v"))

    def model_params(self):
        v = self.get("quench.v")
        return ModelParams(gc=self.gc(), h=self.h(), J=self.get("model.J"),
                           v=1.0 if math.isinf(v) else v,
                           tau=self.get("quench.tau"))

    def t_end(self):
        te = self.get("quench.tEnd")
        return None if te == "auto" else float(te)

    def resolved_dict(self):
        """Fully resolved key set for the manifest."""
        out = {key: self.get(key) for key in KNOWN_KEYS}
        params = self.model_params()
        out.update({
            "resolved.Lx": self.lx(),
            "resolved.gc": self.gc(),
            "resolved.h": self.h(),
            "resolved.t0": params.t0,
            "resolved.uniform": self.is_uniform_quench(),
        })
        return {k: (None if v is None else
                    ("inf" if isinstance(v, float) and math.isinf(v) else v))
                for k, v in out.items()}

    def output_dir(self, default_name):
        out = self.get("output.dir")
        if out is None:
            out = self.get("run.name") or default_name
        root = os.environ.get("STQUENCH_OUTPUT_ROOT", "")
        if root and not os.path.isabs(out):
            return os.path.join(root, out)
        return out


def to_dmrg_settings(config):
    from .dmrg import DmrgSettings
    chi_cap = config.get("mps.chiMax")
    schedule = tuple(min(c, chi_cap) for c in config.get("dmrg.chiSchedule"))
    return DmrgSettings(
        chi_schedule=schedule,
        cutoff=config.get("dmrg.cutoff"),
        max_sweeps=config.get("dmrg.maxSweeps"),
        energy_tol=config.get("dmrg.energyTol"),
        eig_tol=config.get("dmrg.eigTol"),
        noise_schedule=config.get("dmrg.noise"),
        seed=config.get("seed"),
    )


def to_tdvp_settings(config):
    from .tdvp import TdvpSettings
    return TdvpSettings(
        dt=config.get("quench.dt"),
        order=config.get("quench.order"),
        chi_max=config.get("mps.chiMax"),
        cutoff=config.get("mps.cutoff"),
    )


def to_protocol(config):
    from .driver import MeasurementPlan, QuenchProtocol
    plan = MeasurementPlan(
        scalars_every=config.get("schedule.scalarsEvery"),
        grid_every=config.get("schedule.gridEvery"),
        correlations_at_end=config.get("schedule.correlations") == "end",
    )
    return QuenchProtocol(
        lattice=config.lattice(),
        params=config.model_params(),
        dt=config.get("quench.dt"),
        order=config.get("quench.order"),
        t_end=config.t_end(),
        uniform=config.is_uniform_quench(),
        measure=plan,
    )


def estimate_run_bytes(n_sites, chi, mpo_width, phys_dim=2):
    """Rough peak memory of a two-site sweep at bond dimension chi."""
    complex_bytes = 16
    state = n_sites * chi * chi * phys_dim * complex_bytes
    envs = 2 * n_sites * chi * chi * mpo_width * complex_bytes
    theta = 4 * (chi * phys_dim) ** 2 * complex_bytes
    return 3 * state + envs + 8 * theta


def check_resources(config, mpo_width=None):
    """Return (projected MB, cap MB); caller decides whether to refuse."""
    lat = config.lattice()
    width = mpo_width if mpo_width is not None else lat.ly + 4
    projected = estimate_run_bytes(lat.n_sites, config.get("mps.chiMax"), width)
    return projected / 2**20, config.get("resources.memoryCapMb")
