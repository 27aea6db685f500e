# Configuration file for the Sphinx documentation builder.

import os
import sys

sys.path.insert(0, os.path.abspath("../../"))

import plcgan

project = "plcgan"
copyright = "2022, The plcgan Authors"
author = "The plcgan Authors"

version = plcgan.__version__
release = plcgan.__version__

extensions = [
    "sphinx.ext.autodoc",
    "sphinx.ext.napoleon",
    "sphinx_autodoc_typehints",
    "sphinx.ext.intersphinx",
    "sphinx.ext.mathjax",
    "sphinx.ext.viewcode",
    "sphinx_click.ext",
]

templates_path = ["_templates"]
source_suffix = [".rst"]
master_doc = "index"
pygments_style = "colorful"

import sphinx_rtd_theme

html_theme = "sphinx_rtd_theme"
html_theme_path = [sphinx_rtd_theme.get_html_theme_path()]
htmlhelp_basename = "plcgandoc"

man_pages = [(master_doc, "plcgan", "plcgan Documentation", [author], 1)]

intersphinx_mapping = {
    "python": ("https://docs.python.org/3/", None),
    "numpy": ("https://numpy.org/doc/stable/", None),
}

autodoc_member_order = "bysource"
autoclass_content = "both"
autodoc_default_options = {"undoc-members": True}

napoleon_use_rtype = False
