"""Laws of nested conformal radii in conformal loop ensembles, with a simulator that checks them."""

from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:        # running from a source tree
    __version__ = "0.1.0"
