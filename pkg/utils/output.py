from rich.console import Console
from rich.table import Table

import h5py
import numpy as np
import os
from .errors import DumpError
from .log import logger
from typing import Dict, Tuple

__all__ = ["H5Logger", "print_table"]


class H5Logger:
    """Appends one record per output time to resizable HDF5 datasets.

    ``variables`` maps a dataset name to the shape of a single record, e.g.
    ``{"t": (), "n": (128,)}``. Every call to :meth:`write` grows each dataset
    by one record along the first axis.
    """

    def __init__(self, filename: str, variables: Dict[str, Tuple[int, ...]], attrs: dict = None):
        self.filename = filename
        self.variables = {k: tuple(v) for k, v in variables.items()}

        try:
            if os.path.exists(filename):
                logger.warning(f"File {filename} already exists. Overwriting.")
                os.remove(filename)
            self.f = h5py.File(filename, "a")
        except OSError as e:
            raise DumpError(f"cannot open {filename}: {e}") from e

        for var, shape in self.variables.items():
            if var not in self.f:
                self.f.create_dataset(var, (0, *shape), maxshape=(None, *shape), dtype="f8")
        for key, value in (attrs or {}).items():
            self.f.attrs[key] = value

    def write(self, **kwargs):
        for var in self.variables:
            data = self.f[var]
            data.resize((data.shape[0] + 1, *data.shape[1:]))
            data[-1] = np.asarray(kwargs[var], dtype="f8")

    def close(self):
        self.f.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def print_table(title: str = "chemokin summary", **kwargs):
    """Print a summary table of a command"""
    console = Console()
    table = Table(title=title)
    table.add_column("metric", style="bold red")
    table.add_column("value", style="bold red")
    for key, value in kwargs.items():
        if isinstance(value, float):
            value = f"{value:.6g}"
        table.add_row(key, str(value))
    console.print(table)
