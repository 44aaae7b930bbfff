"""Experiment configuration: one INI file drives every subcommand.

The packaged ``default.ini`` is read first; a user file and ``--set
section.key=value`` overrides are layered on top. The hash of the resolved
configuration is written into every artifact for provenance.
"""

from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping, Optional, Sequence

from ..detector import RULE_NAMES, DetectorError, RuleSet
from ..mimicry import DEFAULT_STEP_FRACTION, ONE_TAP_TICKS, ImprovementObjective
from ..profile import DEFAULT_MIN_SAMPLES, BootstrapCriteria
from ..simulator import Scenario, SkillModel
from ..simulator.rng import derive

PLAYER_PREFIX = "player."
# where and how fast a run happens does not change what it computes
UNHASHED = {"experiment.out", "experiment.workers"}


class ConfigError(ValueError):
    """Bad or unreadable configuration; ``key`` names the offending entry."""

    def __init__(self, message: str, key: Optional[str] = None):
        super().__init__(f"{key}: {message}" if key else message)
        self.key = key


def default_text() -> str:
    return resources.files(__package__).joinpath("default.ini").read_text(encoding="utf-8")


@dataclass(frozen=True)
class ExperimentConfig:
    players: Mapping[str, SkillModel]
    scenario: Scenario
    criteria: BootstrapCriteria
    objective: ImprovementObjective
    step_fraction: float
    one_tap_guard: bool
    one_tap_ticks: int
    rules: RuleSet
    alpha: float
    seed: int
    out: Path
    bootstrap_matches: int
    condition_matches: int
    workers: int = 1
    digest: str = field(default="", compare=False)

    def seed_for(self, *keys) -> int:
        """Seed of one campaign, derived from the master seed."""
        return derive(self.seed, *keys)

    def provenance(self) -> dict:
        return {"config_sha256": self.digest, "seed": self.seed}


def _parser() -> configparser.ConfigParser:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str  # keys are case sensitive
    return cp


def _apply_override(cp: configparser.ConfigParser, item: str) -> None:
    key, sep, value = item.partition("=")
    key = key.strip()
    # section names may contain dots (player.A) and so may keys (support.max_s4)
    known = [s for s in cp.sections() if key.startswith(s + ".")]
    if known:
        section = max(known, key=len)
        option = key[len(section) + 1:]
    else:
        section, _, option = key.rpartition(".")
    if not sep or not section or not option:
        raise ConfigError("override must look like section.key=value", item)
    if not cp.has_section(section):
        if not section.startswith(PLAYER_PREFIX):
            raise ConfigError("unknown section", key)
        cp.add_section(section)
    cp.set(section, option, value.strip())


def canonical(cp: configparser.ConfigParser) -> str:
    """Sorted ``section.key = value`` lines; the hash is taken over this text."""
    lines = []
    for section in sorted(cp.sections()):
        for key in sorted(cp[section]):
            if f"{section}.{key}" in UNHASHED:
                continue
            lines.append(f"{section}.{key} = {cp[section][key]}")
    return "\n".join(lines) + "\n"


def read_config(
    path: Optional[Path] = None,
    overrides: Sequence[str] = (),
    seed: Optional[int] = None,
    out: Optional[Path] = None,
) -> ExperimentConfig:
    cp = _parser()
    cp.read_string(default_text(), source="default.ini")
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc.strerror}", str(path)) from exc
        try:
            user = _parser()
            user.read_string(text, source=str(path))
        except configparser.Error as exc:
            raise ConfigError(str(exc).splitlines()[0], str(path)) from exc
        # a user file that defines players replaces the default roster
        if any(s.startswith(PLAYER_PREFIX) for s in user.sections()):
            for s in [s for s in cp.sections() if s.startswith(PLAYER_PREFIX)]:
                cp.remove_section(s)
        for s in user.sections():
            if not cp.has_section(s):
                cp.add_section(s)
            for k, v in user[s].items():
                cp.set(s, k, v)
    for item in overrides:
        _apply_override(cp, item)
    if seed is not None:
        cp.set("experiment", "seed", str(seed))
    if out is not None:
        cp.set("experiment", "out", str(out))
    return from_parser(cp)


def _get(cp, section, key, conv, what):
    try:
        raw = cp.get(section, key)
    except (configparser.NoSectionError, configparser.NoOptionError) as exc:
        raise ConfigError("missing", f"{section}.{key}") from exc
    try:
        return conv(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"expected {what}, got {raw!r}", f"{section}.{key}") from exc


def _bool(raw: str) -> bool:
    v = raw.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(raw)


def _section(cp, name, build):
    try:
        return build(dict(cp[name]) if cp.has_section(name) else {})
    except KeyError as exc:
        raise ConfigError("unknown key", f"{name}.{exc.args[0].split()[-1].strip(chr(39))}") from exc
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc), name) from exc


def from_parser(cp: configparser.ConfigParser) -> ExperimentConfig:
    seed = _get(cp, "experiment", "seed", int, "an integer")
    if seed < 0:
        raise ConfigError("seeds are unsigned", "experiment.seed")

    players = {}
    for s in cp.sections():
        if s.startswith(PLAYER_PREFIX):
            players[s[len(PLAYER_PREFIX):]] = _section(cp, s, SkillModel.from_mapping)
    if not players:
        raise ConfigError("at least one [player.<id>] section is required", "player")

    b = "bootstrap"
    min_samples = dict(DEFAULT_MIN_SAMPLES)
    for k in cp[b] if cp.has_section(b) else ():
        if k.startswith("min_samples."):
            prop = k.split(".", 1)[1]
            if prop not in min_samples:
                raise ConfigError("unknown property", f"{b}.{k}")
            min_samples[prop] = _get(cp, b, k, int, "an integer")
    try:
        criteria = BootstrapCriteria(
            _get(cp, b, "min_hours", float, "a number"),
            _get(cp, b, "min_matches", int, "an integer"),
            _get(cp, b, "min_wins", int, "an integer"),
            min_samples,
        )
    except ValueError as exc:
        raise ConfigError(str(exc), b) from exc

    o = "objective"
    try:
        objective = ImprovementObjective(
            _get(cp, o, "target_gain", float, "a number"),
            cp.get(o, "metric", fallback="a2").strip(),
            tuple(x for x in cp.get(o, "co_targets", fallback="s4,s5").replace(" ", "").split(",") if x),
            _get(cp, o, "horizon", int, "an integer"),
        )
    except ValueError as exc:
        raise ConfigError(str(exc), o) from exc
    step = cp.getfloat(o, "step_fraction", fallback=DEFAULT_STEP_FRACTION)
    if not 0.0 < step <= 1.0:
        raise ConfigError("must lie in (0, 1]", f"{o}.step_fraction")

    r = "rules"
    thresholds = {n: _get(cp, r, n, float, "a number") for n in RULE_NAMES}
    support = {n: cp.getint(r, f"support.{n}", fallback=30) for n in RULE_NAMES}
    try:
        rules = RuleSet.from_mapping(thresholds, support)
    except DetectorError as exc:
        raise ConfigError(str(exc), r) from exc

    alpha = _get(cp, "detector", "alpha", float, "a number")
    if not 0.0 < alpha < 1.0:
        raise ConfigError("must lie in (0, 1)", "detector.alpha")

    e = "experiment"
    cfg = ExperimentConfig(
        players=players,
        scenario=_section(cp, "scenario", Scenario.from_mapping),
        criteria=criteria,
        objective=objective,
        step_fraction=step,
        one_tap_guard=_get(cp, "controller", "one_tap_guard", _bool, "a boolean"),
        one_tap_ticks=cp.getint("controller", "one_tap_ticks", fallback=ONE_TAP_TICKS),
        rules=rules,
        alpha=alpha,
        seed=seed,
        out=Path(cp.get(e, "out", fallback="out")),
        bootstrap_matches=_get(cp, e, "bootstrap_matches", int, "an integer"),
        condition_matches=_get(cp, e, "condition_matches", int, "an integer"),
        workers=cp.getint(e, "workers", fallback=1),
        digest=hashlib.sha256(canonical(cp).encode("utf-8")).hexdigest(),
    )
    if cfg.bootstrap_matches < 1 or cfg.condition_matches < 1:
        raise ConfigError("match counts must be >= 1", e)
    return cfg
