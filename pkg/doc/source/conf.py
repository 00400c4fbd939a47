# Configuration file for the Sphinx documentation builder.
#
# This file only contains a selection of the most common options. For a full
# list see the documentation:
# https://www.sphinx-doc.org/en/master/usage/configuration.html

import os
import sys

# -- Path setup --------------------------------------------------------------

sys.path.insert(0, os.path.abspath("../.."))

import spcnav

# -- Project information -----------------------------------------------------

project = "spcnav"
copyright = "2022, spcnav developers"
author = "spcnav developers"

# The full version, including alpha/beta/rc tags
release = spcnav.__version__

# -- General configuration ---------------------------------------------------

extensions = [
    "sphinx.ext.autodoc",
    "m2r2",
    "sphinx_rtd_theme",
    "sphinx_click",
]

templates_path = []
exclude_patterns = []


# -- Options for HTML output -------------------------------------------------

html_theme = "sphinx_rtd_theme"

# Make sure that classes are documented by their init method
autoclass_content = "init"

# This is an extension that allows us to preserve the default arguments of functions
# as written in code without evaluating them.
autodoc_preserve_defaults = True
