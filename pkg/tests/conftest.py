import numpy as np
import pytest

from pvashape.core import LabeledSeries


def make_series(values, label="NP", original_length=None, id="x0",
                channel_names=None, pad_to=None):
    """LabeledSeries from a 1-D or 2-D array, zero-padding to pad_to."""
    values = np.atleast_2d(np.asarray(values, dtype=np.float64))
    n = original_length if original_length is not None else values.shape[1]
    t = pad_to if pad_to is not None else values.shape[1]
    out = np.zeros((values.shape[0], t))
    out[:, : values.shape[1]] = values
    out[:, n:] = 0.0
    names = channel_names or tuple(f"ch{v}" for v in range(values.shape[0]))
    return LabeledSeries(id=id, values=out, label=label, original_length=n,
                         channel_names=tuple(names))


@pytest.fixture
def series_factory():
    return make_series
