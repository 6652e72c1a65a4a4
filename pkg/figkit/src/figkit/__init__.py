"""Figure scripts for the epidemic-game solver CSV outputs.

One script per figure; each reads the producer's CSV schema strictly and
renders a deterministic PNG.  This package never computes model quantities:
every curve it draws must arrive in a CSV column.

Exit codes: 0 rendered, 1 render error, 2 input/schema error.
"""

__version__ = "0.1.0"
