import logging

import numpy as np
import pandas as pd
import pytest

from opnorm_lab.utils.config import Config, config
from opnorm_lab.utils.errors import DataError, InputValidationError
from opnorm_lab.utils.io import (
    frame_to_csv_text,
    read_json,
    read_matrix_csv,
    read_numeric_csv,
    write_frame_csv,
    write_json,
    write_matrix_csv,
)
from opnorm_lab.utils.logger import setup_logging
from opnorm_lab.utils.parallel import ordered_map
from opnorm_lab.utils.rng import keyed_generator, keyed_rows, split_seed


def test_worker_count_is_capped(monkeypatch):
    monkeypatch.setattr(Config, "THREADS", 4)
    assert config.worker_count() == 4
    assert config.worker_count(2) == 2
    assert config.worker_count(16) == 4
    assert config.worker_count(0) == 1


@pytest.mark.parametrize(
    "name,value",
    [("THREADS", 0), ("DEFAULT_REPS", 0), ("K_MAX", -1), ("LOG_LEVEL", "CHATTY")],
)
def test_validate_config_flags_bad_values(monkeypatch, name, value):
    assert config.validate_config()
    monkeypatch.setattr(Config, name, value)
    assert not config.validate_config()


def test_setup_logging_installs_one_handler():
    setup_logging("DEBUG")
    setup_logging("INFO")
    package_logger = logging.getLogger("opnorm_lab")
    assert len(package_logger.handlers) == 1
    assert package_logger.level == logging.INFO
    assert not package_logger.propagate
    setup_logging("WARNING")


def test_split_seed_is_stable_and_distinct():
    assert split_seed(42, 0) == split_seed(42, 0)
    children = {split_seed(42, j) for j in range(100)}
    assert len(children) == 100
    assert split_seed(42, 1, 2) != split_seed(42, 2, 1)
    assert all(0 <= seed < 2**63 for seed in children)
    with pytest.raises(ValueError):
        split_seed(-1, 0)


def test_keyed_rows_do_not_depend_on_shape():
    small = keyed_rows(7, 0, 0, 3, 4)
    large = keyed_rows(7, 0, 0, 5, 9)
    assert np.array_equal(large[:3, :4], small)
    assert not np.array_equal(keyed_rows(7, 1, 0, 3, 4), small)
    signs = keyed_rows(7, 0, 0, 4, 50, draw="rademacher")
    assert set(np.unique(signs)) <= {-1.0, 1.0}
    assert np.abs(keyed_rows(7, 0, 0, 4, 50, draw="uniform")).max() <= 1.0
    with pytest.raises(ValueError):
        keyed_rows(7, 0, 0, 1, 1, draw="cauchy")


def test_keyed_generator_depends_on_keys_only():
    assert keyed_generator(1, 2, 3).random() == keyed_generator(1, 2, 3).random()
    assert keyed_generator(1, 2, 3).random() != keyed_generator(1, 2, 4).random()


@pytest.mark.parametrize("workers", [1, 3, 8])
def test_ordered_map_preserves_order(workers):
    assert ordered_map(lambda x: x * x, range(20), workers) == [x * x for x in range(20)]
    assert ordered_map(str, [], workers) == []


def test_matrix_csv_layout(tmp_path, rng):
    array = rng.standard_normal((3, 5))
    path = write_matrix_csv(array, tmp_path / "m.csv")
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[:2] == ["rows,cols", "3,5"]
    assert np.array_equal(read_matrix_csv(path), array)


def test_matrix_csv_errors(tmp_path):
    with pytest.raises(DataError):
        read_matrix_csv(tmp_path / "absent.csv")
    wrong_header = tmp_path / "header.csv"
    wrong_header.write_text("r,c\n1,1\n0\n", encoding="utf-8")
    with pytest.raises(DataError):
        read_matrix_csv(wrong_header)
    wrong_shape = tmp_path / "shape.csv"
    wrong_shape.write_text("rows,cols\n2,2\n1,2\n", encoding="utf-8")
    with pytest.raises(DataError):
        read_matrix_csv(wrong_shape)


def test_numeric_csv_with_and_without_header(tmp_path):
    plain = tmp_path / "plain.csv"
    plain.write_text("1,2\n3,4\n", encoding="utf-8")
    headed = tmp_path / "headed.csv"
    headed.write_text("x,y\n1,2\n3,4\n", encoding="utf-8")
    assert np.array_equal(read_numeric_csv(plain), [[1.0, 2.0], [3.0, 4.0]])
    assert np.array_equal(read_numeric_csv(headed), [[1.0, 2.0], [3.0, 4.0]])
    with pytest.raises(DataError):
        read_numeric_csv(tmp_path / "absent.csv")
    ragged = tmp_path / "ragged.csv"
    ragged.write_text("1,2\n3,4,5\n6\n", encoding="utf-8")
    empty = tmp_path / "empty.csv"
    empty.write_text("", encoding="utf-8")
    for path in (ragged, empty):
        with pytest.raises(InputValidationError):
            read_numeric_csv(path)


def test_json_helpers(tmp_path):
    path = write_json({"b": 1, "a": [1.5, 2]}, tmp_path / "nested" / "doc.json")
    assert path.read_text(encoding="utf-8").endswith("}\n")
    assert read_json(path) == {"a": [1.5, 2], "b": 1}
    broken = tmp_path / "broken.json"
    broken.write_text("{not json", encoding="utf-8")
    with pytest.raises(DataError):
        read_json(broken)


def test_frame_csv_is_deterministic(tmp_path):
    frame = pd.DataFrame({"x": [0.1, 1 / 3], "series": ["a", "b"]})
    path = write_frame_csv(frame, tmp_path / "frame.csv")
    text = path.read_text(encoding="utf-8")
    assert text == frame_to_csv_text(frame)
    assert text.splitlines()[0] == "x,series"
    assert "\r" not in text
    assert pd.read_csv(path)["x"].tolist() == [0.1, 1 / 3]
