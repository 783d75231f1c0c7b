"""Package marker for the simulator module.

The Monte Carlo engine: path generation, moment tables and benchmark pricers,
e.g. 'from simulator import paths'.
"""
