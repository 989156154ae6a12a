"""Reading and writing the engine's CSV formats."""
import logging

import numpy as np
import pandas as pd

from app.middleware import (
    COUNTS_COLUMNS,
    QTABLE_COLUMNS,
    ROWS_COLUMNS,
    DataParseError,
    validate_counts_frame,
    validate_qtable_frame,
    validate_rows_frame,
)
from app.models import CELLS, CountsTable, ObservedCellParams

logger = logging.getLogger(__name__)


def _read_raw(path):
    try:
        return pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    except pd.errors.EmptyDataError as e:
        raise DataParseError("File is empty", line=1) from e
    except pd.errors.ParserError as e:
        raise DataParseError(f"Malformed CSV: {e}") from e


def _raise_first(errors):
    if errors:
        line, message = errors[0]
        raise DataParseError(message, line=line)


def parse_counts_frame(frame):
    _raise_first(validate_counts_frame(frame))
    values = frame[COUNTS_COLUMNS[2:]].apply(pd.to_numeric).astype(np.int64).to_numpy()
    return CountsTable.from_array(values)


def parse_rows_frame(frame):
    _raise_first(validate_rows_frame(frame))
    rows = pd.DataFrame({c: frame[c].str.strip().astype(int) for c in ['x', 'z', 'r']})
    rows['y'] = pd.to_numeric(frame['y'].str.strip(), errors='coerce').astype('Int64')
    return rows


def read_counts_csv(path):
    return parse_counts_frame(_read_raw(path))


def read_rows_csv(path):
    return parse_rows_frame(_read_raw(path))


def read_qtable_csv(path):
    """Four cells of observed-data probabilities (x, z, q10, q11, q0dot)"""
    frame = _read_raw(path)
    if list(frame.columns) == QTABLE_COLUMNS:
        frame = frame.apply(pd.to_numeric, errors='coerce')
    _raise_first(validate_qtable_frame(frame))
    return tuple(
        ObservedCellParams(float(r.q10), float(r.q11), 1.0 - float(r.q10) - float(r.q11))
        for r in frame.itertuples()
    )


def read_input(path):
    """Counts CSV or unit-row CSV, detected from the header.

    Returns (counts, rows); rows is None for a counts file.
    """
    frame = _read_raw(path)
    header = list(frame.columns)
    if header == COUNTS_COLUMNS:
        return parse_counts_frame(frame), None
    if header == ROWS_COLUMNS:
        rows = parse_rows_frame(frame)
        return rows_to_counts(rows), rows
    raise DataParseError(
        f"Header must be {','.join(COUNTS_COLUMNS)} or {','.join(ROWS_COLUMNS)}", line=1)


def rows_to_counts(rows):
    """Aggregate unit rows into per-cell (n10, n11, n0dot)"""
    cells = []
    for c in CELLS:
        cell = rows[(rows['x'] == c.x) & (rows['z'] == c.z)]
        seen = cell[cell['r'] == 1]
        n11 = int((seen['y'] == 1).sum())
        cells.append((len(seen) - n11, n11, int((cell['r'] == 0).sum())))
    return CountsTable(tuple(cells))


def counts_to_rows(counts):
    """Expand counts into unit rows in cell order: (r=1,y=0), (r=1,y=1), then missing"""
    records = []
    for c, (n10, n11, n0dot) in zip(CELLS, counts.cells):
        records += [(c.x, c.z, 1, 0)] * n10 + [(c.x, c.z, 1, 1)] * n11 + [(c.x, c.z, 0, None)] * n0dot
    rows = pd.DataFrame(records, columns=ROWS_COLUMNS)
    rows[['x', 'z', 'r']] = rows[['x', 'z', 'r']].astype(int)
    rows['y'] = pd.array(rows['y'].tolist(), dtype='Int64')
    return rows


def write_counts_csv(counts, path):
    counts.to_frame().to_csv(path, index=False)
    logger.info(f"Wrote counts to {path}")


def write_rows_csv(rows, path):
    rows[ROWS_COLUMNS].to_csv(path, index=False)
    logger.info(f"Wrote {len(rows)} rows to {path}")
