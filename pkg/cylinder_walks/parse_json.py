import copy
import json
import hashlib
from .experiments import DEFAULT_CHECKS, SHAPES, SitePlan, SiteSpec
from .utils import (
    EigenMethod,
    GraphFamily,
    SolveMethod,
    WalkMode,
    parse_enum,
    quantity_from_config,
)

DESK_SIZES = {
    GraphFamily.Box: [10, 14, 20],
    GraphFamily.Sierpinski: [3, 4, 5],
    GraphFamily.Tree: [6, 8, 10],
}

DEFAULT_POSITION = {
    GraphFamily.Box: "center",
    GraphFamily.Sierpinski: "corner",
    GraphFamily.Tree: "interior",
}

POSITIONS = {
    GraphFamily.Box: ("center", "face", "corner"),
    GraphFamily.Sierpinski: ("corner", "midpoint"),
    GraphFamily.Tree: ("interior", "boundary"),
}

DEFAULT_RHO = {
    GraphFamily.Box: 20,
    GraphFamily.Sierpinski: 20,
    GraphFamily.Tree: 6,
}

DEFAULT_CONFIG = {
    "graph": {"family": "box", "d": 2, "sizes": None, "eigen_method": None},
    "sites": {"alpha": 1.0, "eps": 0.5, "specs": None},
    "walk": {
        "mode": "discrete",
        "trials": 1000,
        "seed": 0,
        "n_jobs": 1,
        "batch_size": 500,
    },
    "capacity": {"rho": None, "method": "exact", "trials": 20000},
    "grid": {"M": None, "ratio": 10},
    "checks": {
        **DEFAULT_CHECKS,
        "bins": 8,
        "min_records": 10000,
        "min_per_bin": 50,
        "max_relative_width": 0.05,
        "slope_tolerance": 0.15,
        "reference_K": 400,
        "reference_draws": 10000,
    },
    "output": {"directory": "runs"},
}

# sections each pipeline stage reads; a stage's cache key hashes only these
STAGE_SECTIONS = {
    "gen-graph": ("graph",),
    "spectral": ("graph", "sites"),
    "grid": ("graph", "sites", "grid"),
    "capacity": ("graph", "sites", "capacity"),
    "simulate": ("graph", "sites", "walk"),
    "verify": ("graph", "sites", "walk", "capacity", "checks"),
}

# stages drawing random numbers without reading the walk section
SEEDED_STAGES = ("capacity",)

UNITS = {("capacity", "rho"): "hop"}


class ConfigError(ValueError):
    """Invalid experiment configuration

    Parameters
    ----------
    diagnostics : list of tuple
        (field path, message) for every problem found

    Attributes
    ----------
    diagnostics : list of tuple
    """

    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        lines = [f"{field}: {message}" for field, message in self.diagnostics]
        super().__init__("Invalid configuration\n" + "\n".join(lines))


def canonical_json(obj):
    """JSON text with sorted keys and no whitespace"""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_hash(obj):
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()


class ExperimentConfig:
    """A validated experiment configuration

    Parameters
    ----------
    config : dict
        complete configuration with every section of `DEFAULT_CONFIG`

    Attributes
    ----------
    config : dict

    family : GraphFamily

    d : int
        box dimension or tree arity

    sizes : list of int

    seed : int
        master seed

    output : str
        output directory
    """

    def __init__(self, config):
        self.config = config
        self.family = parse_enum(GraphFamily, config["graph"]["family"])
        self.d = config["graph"]["d"]
        self.sizes = config["graph"]["sizes"]
        self.seed = config["walk"]["seed"]
        self.output = config["output"]["directory"]

    def __repr__(self):
        return (
            f"<cylinder_walks.parse_json.ExperimentConfig family:{self.family.name} "
            f"sizes:{self.sizes} hash:{self.hash[:12]}>\n"
        )

    def __eq__(self, other):
        if not isinstance(other, self.__class__):
            return False
        return self.hash == other.hash

    def __hash__(self):
        return hash(self.hash)

    def __getitem__(self, section):
        return self.config[section]

    @property
    def hash(self):
        """sha256 of the canonical JSON, without the output directory"""
        return config_hash({k: v for k, v in self.config.items() if k != "output"})

    def stage_hash(self, stage):
        """sha256 over the sections `stage` reads, plus the master seed for
        stages that draw random numbers

        Raises
        ------
        KeyError
            When `stage` is unknown
        """
        payload = {k: self.config[k] for k in STAGE_SECTIONS[stage]}
        if stage in SEEDED_STAGES:
            payload["seed"] = self.seed
        return config_hash(payload)

    @property
    def mode(self):
        return parse_enum(WalkMode, self.config["walk"]["mode"])

    @property
    def capacity_method(self):
        return parse_enum(SolveMethod, self.config["capacity"]["method"])

    @property
    def eigen_method(self):
        method = self.config["graph"]["eigen_method"]
        return None if method is None else parse_enum(EigenMethod, method)

    def plan(self):
        """The `SitePlan` of the configuration"""
        sites = self.config["sites"]
        return SitePlan(
            [SiteSpec(**spec) for spec in sites["specs"]],
            alpha=sites["alpha"],
            eps=sites["eps"],
        )

    def to_dict(self):
        return copy.deepcopy(self.config)

    def to_json(self, outpath="", indent=4):
        if outpath:
            with open(outpath, "w") as file:
                json.dump(self.config, file, indent=indent, sort_keys=True)
        return self.to_dict()


class ConfigParser:
    """A parser to convert a JSON file into an `ExperimentConfig`.
    Missing fields take their value from `DEFAULT_CONFIG`; every problem is
    collected before a `ConfigError` is raised.

    Parameters
    ----------
    path : str
        path to the JSON file to load. Default is None, meaning the defaults

    overrides : dict
        section-wise values applied on top of the file, e.g. from the command
        line. Default is None

    Attributes
    ----------
    path : str

    config : dict
        dictionary with the contents of the JSON file and the overrides
    """

    def __init__(self, path=None, overrides=None):
        self.path = path
        self.config = {}
        if path is not None:
            with open(path, "r") as file:
                try:
                    self.config = json.load(file)
                except json.JSONDecodeError as err:
                    raise ConfigError([("<file>", f"{path} is not valid JSON: {err}")])
        for section, values in (overrides or {}).items():
            self.config.setdefault(section, {}).update(values)

    @classmethod
    def from_dict(cls, config):
        parser = cls()
        parser.config = copy.deepcopy(config)
        return parser

    def initialize_config(self, verbose=False):
        """Validates the loaded dictionary and fills in defaults

        Parameters
        ----------
        verbose : bool
            If `True` will print informative statements while validating

        Raises
        ------
        ConfigError
            With one diagnostic per invalid field

        Returns
        -------
        ExperimentConfig
        """
        problems = []
        merged = copy.deepcopy(DEFAULT_CONFIG)
        for section, values in self.config.items():
            if section not in DEFAULT_CONFIG:
                problems.append((section, "unknown section"))
                continue
            if not isinstance(values, dict):
                problems.append((section, "section must be an object"))
                continue
            for key, value in values.items():
                if key not in DEFAULT_CONFIG[section]:
                    problems.append((f"{section}.{key}", "unknown field"))
                    continue
                units = UNITS.get((section, key))
                if units is not None:
                    try:
                        value = quantity_from_config(value, units)
                    except Exception as err:
                        problems.append((f"{section}.{key}", str(err)))
                        continue
                merged[section][key] = value
            if verbose:
                print(f"Read section {section}...")

        family = self._validate_graph(merged["graph"], problems)
        self._validate_sites(merged["sites"], family, problems)
        self._validate_walk(merged["walk"], problems)
        self._validate_capacity(merged["capacity"], family, problems)
        grid = merged["grid"]
        if grid["M"] is not None and not _is_int(grid["M"], 1):
            problems.append(("grid.M", "must be a positive integer or null"))
        if not _is_int(grid["ratio"], 1):
            problems.append(("grid.ratio", "must be a positive integer"))
        for key, value in merged["checks"].items():
            if not _is_number(value) and not (
                isinstance(value, list) and all(_is_number(v) for v in value)
            ):
                problems.append((f"checks.{key}", "must be a number or a list"))
        if not isinstance(merged["output"]["directory"], str):
            problems.append(("output.directory", "must be a string"))
        if problems:
            raise ConfigError(problems)
        if verbose:
            print("Configuration valid")
        return ExperimentConfig(merged)

    @staticmethod
    def _validate_graph(graph, problems):
        try:
            family = parse_enum(GraphFamily, graph["family"])
        except ValueError as err:
            problems.append(("graph.family", str(err)))
            return None
        graph["family"] = family.name.lower()
        if family in (GraphFamily.Box, GraphFamily.Tree) and not _is_int(graph["d"], 2):
            problems.append(("graph.d", "must be an integer >= 2"))
        if graph["sizes"] is None:
            graph["sizes"] = list(DESK_SIZES[family])
        sizes = graph["sizes"]
        low = 3 if family == GraphFamily.Box else 1
        if not isinstance(sizes, list) or not all(_is_int(n, low) for n in sizes):
            problems.append(("graph.sizes", f"must be a list of integers >= {low}"))
        elif sorted(set(sizes)) != sizes or not sizes:
            problems.append(("graph.sizes", "must be non-empty and increasing"))
        if graph["eigen_method"] is not None:
            try:
                parse_enum(EigenMethod, graph["eigen_method"])
            except ValueError as err:
                problems.append(("graph.eigen_method", str(err)))
        return family

    @staticmethod
    def _validate_sites(sites, family, problems):
        if not _is_number(sites["alpha"]) or sites["alpha"] < 0:
            problems.append(("sites.alpha", "must be a non-negative number"))
        if not _is_number(sites["eps"]) or not 0 < sites["eps"] < 1:
            problems.append(("sites.eps", "must lie in (0, 1)"))
        if sites["specs"] is None and family is not None:
            sites["specs"] = [{"position": DEFAULT_POSITION[family]}]
        if not isinstance(sites["specs"], list) or not sites["specs"]:
            problems.append(("sites.specs", "must be a non-empty list"))
            return
        if len(sites["specs"]) > 3:
            problems.append(("sites.specs", "at most three sites are supported"))
        for m, spec in enumerate(sites["specs"]):
            field = f"sites.specs[{m}]"
            if not isinstance(spec, dict) or "position" not in spec:
                problems.append((field, "needs a position"))
                continue
            unknown = set(spec) - {"position", "v", "shape", "radius"}
            if unknown:
                problems.append((field, f"unknown keys {sorted(unknown)}"))
            if family is not None and spec["position"] not in POSITIONS[family]:
                problems.append(
                    (f"{field}.position", f"must be one of {POSITIONS[family]}")
                )
            if spec.get("shape", "single") not in SHAPES:
                problems.append((f"{field}.shape", f"must be one of {SHAPES}"))
            if not _is_int(spec.get("radius", 2), 1):
                problems.append((f"{field}.radius", "must be an integer >= 1"))
            if not _is_number(spec.get("v", 0.0)):
                problems.append((f"{field}.v", "must be a number"))

    @staticmethod
    def _validate_walk(walk, problems):
        try:
            walk["mode"] = parse_enum(WalkMode, walk["mode"]).name.lower()
        except ValueError as err:
            problems.append(("walk.mode", str(err)))
        for key, low in (("trials", 1), ("seed", 0), ("n_jobs", 1), ("batch_size", 1)):
            if _is_int(walk[key], low):
                walk[key] = int(walk[key])
            else:
                problems.append((f"walk.{key}", f"must be an integer >= {low}"))

    @staticmethod
    def _validate_capacity(capacity, family, problems):
        if capacity["rho"] is None and family is not None:
            capacity["rho"] = DEFAULT_RHO[family]
        if _is_int(capacity["rho"], 3):
            capacity["rho"] = int(capacity["rho"])
        else:
            problems.append(("capacity.rho", "must be an integer >= 3"))
        try:
            parse_enum(SolveMethod, capacity["method"])
        except ValueError as err:
            problems.append(("capacity.method", str(err)))
        if not _is_int(capacity["trials"], 1):
            problems.append(("capacity.trials", "must be an integer >= 1"))


def _is_int(value, low):
    if isinstance(value, float) and value.is_integer():
        value = int(value)
    return isinstance(value, int) and not isinstance(value, bool) and value >= low


def _is_number(value):
    return isinstance(value, (int, float)) and not isinstance(value, bool)
