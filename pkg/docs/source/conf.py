# Configuration file for the Sphinx documentation builder.
# https://www.sphinx-doc.org/en/master/usage/configuration.html

import datetime
import os
import sys

sys.path.insert(0, os.path.abspath("../.."))

project = "ctanet"
copyright = f"{datetime.datetime.now().year}, ctanet developers"
author = "ctanet developers"
release = "0.1.0"

extensions = [
    "sphinx.ext.autodoc",
    "sphinx.ext.viewcode",
    "sphinx.ext.napoleon",
    "sphinx.ext.intersphinx",
    "sphinx.ext.mathjax",
]

autodoc_default_options = {
    "member-order": "bysource",
    "exclude-members": "__weakref__, __dict__",
}
napoleon_google_docstring = False
napoleon_numpy_docstring = True
napoleon_use_param = True
napoleon_use_rtype = True

templates_path = ["_templates"]
exclude_patterns = []

html_theme = "sphinx_rtd_theme"
html_theme_options = {"collapse_navigation": False, "navigation_depth": 3}

autoclass_content = "both"
autodoc_typehints = "description"

# Heavy numerical packages are not needed to render the API pages
autodoc_mock_imports = [
    "numpy",
    "pandas",
    "sklearn",
    "PIL",
]

intersphinx_mapping = {
    "python": ("https://docs.python.org/3/", None),
    "numpy": ("https://numpy.org/doc/stable/", None),
    "pandas": ("https://pandas.pydata.org/docs/", None),
}
