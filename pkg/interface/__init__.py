"""Package marker for the interface module.

Experiment configuration, CSV reporting and the command-line front end,
e.g. 'from interface import cli'.
"""
