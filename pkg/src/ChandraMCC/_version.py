# This file is automatically generated by hatch-vcs. Do not edit.
__version__ = "0.1.0"
__version_tuple__ = (0, 1, 0)
