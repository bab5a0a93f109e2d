# -*- coding: utf-8 -*-
"""Main package for cylinder-walks."""

__author__ = "Cylinder Walks Developers"
__email__ = "cylinder-walks@googlegroups.com"
# Do not edit this string manually, always use bumpversion
# Details in CONTRIBUTING.rst
__version__ = "0.1.0"


def get_module_version():
    return __version__
