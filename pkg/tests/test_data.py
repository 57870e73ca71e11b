import numpy as np
import pytest

from hyperfscil.data import dataset_to_csv, generate_synthetic, load_csv_dataset, write_csv_dataset
from hyperfscil.errors import DatasetError


def _write(tmp_path, text):
    path = tmp_path / "d.csv"
    path.write_text(text, encoding="utf-8")
    return path


def test_generator_properties():
    ds = generate_synthetic(5, 10, 4, 3, 10.0, 0)
    assert ds.classes == [0, 1, 2, 3, 4]
    assert ds == generate_synthetic(5, 10, 4, 3, 10.0, 0)
    assert not ds == generate_synthetic(5, 10, 4, 3, 10.0, 1)
    assert len(ds.indices("train")) == 50 and len(ds.indices("test", 2)) == 4


def test_separation_ten_is_easy_for_nearest_mean():
    ds = generate_synthetic(10, 50, 100, 8, 10.0, 3)
    tr, te = ds.indices("train"), ds.indices("test")
    means = np.array([ds.x[tr][ds.y[tr] == c].mean(axis=0) for c in ds.classes])
    pred = np.argmin(np.linalg.norm(ds.x[te][:, None] - means[None], axis=-1), axis=1)
    assert np.mean(pred == ds.y[te]) >= 0.99


def test_csv_round_trip(tmp_path):
    ds = generate_synthetic(3, 4, 2, 5, 4.0, 9)
    path = tmp_path / "blobs.csv"
    write_csv_dataset(ds, path)
    assert load_csv_dataset(path) == ds
    raw = path.read_bytes()
    assert b"\r\n" not in raw
    assert raw.startswith(b"split,class,f0,f1,f2,f3,f4\n")


def test_small_valid_file(tmp_path):
    ds = load_csv_dataset(_write(tmp_path, "split,class,f0\ntrain,0,1.5\ntest,0,-2\n"))
    assert len(ds.y) == 2 and ds.dim == 1


@pytest.mark.parametrize(
    "body, line, fragment",
    [
        ("train,0,1,2,3,4\ntrain,0,1,2,3\n", 3, "features"),
        ("train,0,1,2,x,4\n", 2, "non-numeric"),
        ("valid,0,1,2,3,4\n", 2, "split"),
        ("train,-1,1,2,3,4\n", 2, "class"),
        ("train,0,1,2,3,4\ntrain,2,1,2,3,4\n", 3, "contiguous"),
    ],
)
def test_csv_errors_carry_line_numbers(tmp_path, body, line, fragment):
    path = _write(tmp_path, "split,class,f0,f1,f2,f3\n" + body)
    with pytest.raises(DatasetError, match=fragment) as err:
        load_csv_dataset(path)
    assert str(err.value).startswith(f"line {line}:")


def test_csv_text_is_locale_free():
    text = dataset_to_csv(generate_synthetic(2, 1, 1, 2, 1000.0, 0))
    for line in text.splitlines()[1:]:
        for cell in line.split(",")[2:]:
            float(cell)
