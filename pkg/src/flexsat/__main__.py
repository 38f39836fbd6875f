"""Allow `python -m flexsat` as an alias for the console script."""
from flexsat.harness.cli import entry

entry()
