import json
import hashlib
import numpy as np
from enum import Enum, auto
from pint import UndefinedUnitError
from .units import u, strip_units


class GraphFamily(Enum):
    """Enum to represent the base graph families"""

    Box = auto()
    Sierpinski = auto()
    Tree = auto()
    File = auto()


class LimitModel(Enum):
    """Enum to represent the infinite graphs describing neighborhoods of sites"""

    Lattice = auto()
    SierpinskiHalf = auto()
    SierpinskiFull = auto()
    RegularTree = auto()
    BoundaryTree = auto()


class WalkMode(Enum):
    """Enum to represent discrete-time and continuous-time walks"""

    Discrete = auto()
    Continuous = auto()


class SolveMethod(Enum):
    """Enum to represent how an escape probability or capacity is computed"""

    Exact = auto()
    MonteCarlo = auto()


class EigenMethod(Enum):
    """Enum to represent the eigensolver used for spectral gaps"""

    Dense = auto()
    Iterative = auto()


class Provenance(Enum):
    """Enum to represent where a vacant configuration came from"""

    InterlacementSample = auto()
    WalkExperiment = auto()


class Verdict(Enum):
    """Enum to represent the outcome of a statistical check"""

    Pass = auto()
    Fail = auto()
    Inconclusive = auto()


class NpEncoder(json.JSONEncoder):
    """Custom JSON encoder for numpy and Enum types"""

    def default(self, obj):
        if isinstance(obj, np.integer):
            return int(obj)
        if isinstance(obj, np.floating):
            return float(obj)
        if isinstance(obj, np.bool_):
            return bool(obj)
        if isinstance(obj, np.ndarray):
            return obj.tolist()
        if isinstance(obj, Enum):
            return obj.name
        return super(NpEncoder, self).default(obj)


def parse_enum(enum_cls, value):
    """Look up an Enum member by case-insensitive name

    Parameters
    ----------
    enum_cls : type
        Enum class, e.g. `GraphFamily`

    value : str or Enum
        name such as "box" or "MonteCarlo", or a member of `enum_cls`

    Raises
    ------
    ValueError
        When `value` names no member of `enum_cls`

    Returns
    -------
    Enum
        the matching member
    """
    if isinstance(value, enum_cls):
        return value
    clean = str(value).lower().replace("-", "").replace("_", "")
    for member in enum_cls:
        if member.name.lower() == clean:
            return member
    if clean == "mc" and "MonteCarlo" in enum_cls.__members__:
        return enum_cls.MonteCarlo
    raise ValueError(f"{value} is not a valid {enum_cls.__name__}")


def stable_key(part):
    """Map a seed-derivation key to a non-negative integer.
    Integers pass through, strings are hashed with sha256 so that the mapping
    does not depend on Python's randomized `hash`

    Parameters
    ----------
    part : int or str

    Returns
    -------
    int
    """
    if isinstance(part, (int, np.integer)):
        if part < 0:
            raise ValueError(f"Seed keys must be non-negative, got {part}")
        return int(part)
    digest = hashlib.sha256(str(part).encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "little")


def derive_rng(seed, *keys):
    """Create a generator for the stream identified by (`seed`, `keys`).
    The stream uses a counter-based Philox bit generator seeded with
    ``SeedSequence(seed, spawn_key=keys)``, so that streams for distinct key
    tuples are independent and every stream is reproducible

    Parameters
    ----------
    seed : int
        master seed

    keys : int or str
        stream identifiers, e.g. ("trials", N, batch)

    Returns
    -------
    numpy.random.Generator
    """
    spawn_key = tuple(stable_key(key) for key in keys)
    sequence = np.random.SeedSequence(stable_key(seed), spawn_key=spawn_key)
    return np.random.Generator(np.random.Philox(sequence))


def as_rng(seed, *keys):
    """Return `seed` if it already is a generator, otherwise derive one"""
    if isinstance(seed, np.random.Generator):
        return seed
    return derive_rng(0 if seed is None else seed, *keys)


def parse_quantity(value, units):
    """Convert a value and unit string to a Pint quantity

    Parameters
    ----------
    value : float

    units : str

    Returns
    -------
    pint.Quantity
        a Pint Quantity with the given value and units
    """
    if value is not None:
        if units:
            return value * parse_units(units)
        else:
            return value
    else:
        return None


def parse_units(units):
    """Convert a unit string to a Pint Unit object

    Parameters
    ----------
    units : str

    Raises
    ------
    ValueError
        When `units` is not understood by the registry

    Returns
    -------
    Unit
        a Pint Unit for the given string
    """
    if units is None or units == "" or units.lower() == "none":
        return
    clean_units = units.lower().replace(" ", "")
    aliases = {
        "ticks": "tick",
        "time": "tick",
        "hops": "hop",
        "weight": "edge_weight",
        "weights": "edge_weight",
        "jumps": "jump",
        "jumps/tick": "jump_rate",
    }
    clean_units = aliases.get(clean_units, clean_units)
    try:
        return u(clean_units).units
    except UndefinedUnitError:
        raise ValueError(f"Unknown units '{units}'")


def quantity_from_config(entry, units):
    """Read a configuration value that is either a plain number or a
    ``{"value": ..., "units": ...}`` dictionary, and return its magnitude in
    `units`

    Parameters
    ----------
    entry : float, int or dict

    units : str
        units expected by the caller

    Returns
    -------
    float
    """
    if isinstance(entry, dict):
        return strip_units(parse_quantity(entry["value"], entry.get("units")), units)
    return entry
