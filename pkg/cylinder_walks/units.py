"""Module containing the global unit registry.

The `Pint package <https://pint.readthedocs.io/en/latest/>`_ attaches units to
numerical values. Walk quantities are dimensionless in the mathematical sense,
but keeping them tagged at the configuration and report boundary prevents
mixing a time horizon with a step count or a capacity with a probability.
This module contains a registry, named ``u``, extending Pint's defaults with

Walk Units
----------
* ``u.tick`` = ``u.tk``: unit of continuous walk time
* ``u.hop``: graph distance (one edge)
* ``u.edge_weight`` = ``u.ew``: edge and vertex weights, capacities
* ``u.jump``: number of jumps of a continuous-time walk
* ``u.jump_rate`` = ``u.jump`` / ``u.tick``: spectral gaps and jump rates
"""

import os
import pint

# A global unit registry that can be used by any of other module.
unit_registry = pint.UnitRegistry(system="mks", autoconvert_offset_to_baseunit=True)
u = unit_registry

u.default_format = ".6g"

units_path = os.path.join(os.path.dirname(__file__), "data", "unit_definitions.txt")
u.load_definitions(units_path)


def set_sig_figs(n=6):
    """Set the default number of significant figures used to print Pint
    quantities in reports.

    Parameters
    ----------
    n : int
        number of significant figures to display. Defaults to 6.
    """
    u.default_format = "." + str(n) + "g"


def strip_units(quantity, units):
    """Convert `quantity` to `units` and return the bare magnitude

    Parameters
    ----------
    quantity : pint.Quantity, float, int
        Value to convert. Plain numbers are assumed to already be in `units`

    units : str
        Target unit, e.g. "tick"

    Raises
    ------
    pint.DimensionalityError
        When `quantity` cannot be expressed in `units`

    Returns
    -------
    float
        magnitude of `quantity` in `units`
    """
    if isinstance(quantity, pint.Quantity):
        return quantity.to(units).magnitude
    return quantity
