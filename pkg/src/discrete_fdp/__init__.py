"""Exact f-DP tradeoff curves for discrete mechanisms, their (eps, delta) and
GDP conversions, CLT composition, and a mean-estimation benchmark."""

from importlib import metadata as _metadata

try:
    __version__ = _metadata.version("artifact")
except _metadata.PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"
