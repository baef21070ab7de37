"""Hurricane, blackout and heatwave compound-hazard Monte Carlo for regional power systems."""

__version__ = "0.1.0"
