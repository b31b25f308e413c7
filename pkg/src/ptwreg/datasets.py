"""Embedded reference data.

The dicentrics data record, for each of five absorbed radiation doses, how
many blood cells carried y = 0..7 dicentric chromosome aberrations.  The
table is stored in frequency form (dose, y, count) and expands to one row
per cell; the classical model for these data is a quadratic dose effect on
the log mean.
"""

from __future__ import annotations

from .dataio import Column, DatasetTable, expand_count_column, table_csv
from .errors import InvalidParameterError

_DOSES = (0.1, 0.3, 0.5, 0.7, 1.0)

# Cell frequencies by number of dicentrics y = 0..7, one row per dose.
_FREQUENCIES = (
    (2281, 130, 21, 1, 0, 0, 0, 0),
    (847, 127, 19, 6, 1, 0, 0, 0),
    (567, 165, 49, 16, 2, 0, 0, 0),
    (356, 167, 62, 9, 5, 1, 0, 0),
    (169, 131, 72, 18, 9, 0, 0, 1),
)

DATASET_NAMES = ("dicentrics",)


def dicentrics_table(expand_counts: bool = False) -> DatasetTable:
    """The dicentrics data as a typed table.

    In frequency form the table has 40 rows (dose, y, count); with
    ``expand_counts`` it expands to one row per observed cell.
    """
    dose, y, count = [], [], []
    for d, freqs in zip(_DOSES, _FREQUENCIES):
        for k, n in enumerate(freqs):
            dose.append(d)
            y.append(k)
            count.append(n)
    table = DatasetTable(
        (
            Column("dose", "real", tuple(dose)),
            Column("y", "integer", tuple(y)),
            Column("count", "integer", tuple(count)),
        )
    )
    return expand_count_column(table) if expand_counts else table


def dicentrics_csv() -> str:
    """The frequency-form table as CSV text (header dose,y,count)."""
    return table_csv(dicentrics_table())


def dataset_table(name: str, expand_counts: bool = False) -> DatasetTable:
    if name == "dicentrics":
        return dicentrics_table(expand_counts)
    raise InvalidParameterError(
        f"unknown dataset {name!r}; available: {', '.join(DATASET_NAMES)}"
    )
