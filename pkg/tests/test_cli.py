import numpy as np
import pytest

from aqsketch import persistence
from aqsketch.cli import EXIT_DATA, EXIT_INVARIANT, EXIT_OK, EXIT_USAGE, main
from aqsketch.sketch import Sketch


@pytest.fixture
def text_input(tmp_path):
    path = tmp_path / "in.txt"
    path.write_text("# sample\n" + "\n".join(str(i) for i in range(1, 1001)) + "\n")
    return path


def test_build_reports_and_writes(tmp_path, text_input, capsys):
    out = tmp_path / "a.aqs"
    assert main(["build", "--input", str(text_input), "--output", str(out)]) == EXIT_OK
    line = capsys.readouterr().out
    assert "N=1000" in line
    h = int(line.split("H=")[1].split()[0])
    assert h <= 8  # log2(0.1 * 1000) + 2
    assert persistence.load(out).n_items == 1000


def test_build_empty_input(tmp_path):
    empty = tmp_path / "e.txt"
    empty.write_text("")
    out = tmp_path / "e.aqs"
    assert main(["build", "--input", str(empty), "--output", str(out)]) == EXIT_OK
    assert persistence.load(out).n_items == 0


def test_bad_epsilon_is_usage_error(tmp_path, text_input):
    with pytest.raises(SystemExit) as info:
        main(["build", "--eps", "2", "--input", str(text_input), "--output", str(tmp_path / "x")])
    assert info.value.code == EXIT_USAGE


def test_parse_error_is_data_error(tmp_path, capsys):
    bad = tmp_path / "bad.txt"
    bad.write_text("1\nabc\n")
    assert main(["build", "--input", str(bad), "--output", str(tmp_path / "x")]) == EXIT_DATA
    assert "line 2" in capsys.readouterr().err


def _write(path, keys, seed=0, eps=0.1, delta=0.125):
    s = Sketch.create(eps, delta, seed=seed)
    s.extend(keys)
    persistence.save(s, path)
    return s


def test_merge_with_empty_then_query(tmp_path, capsys):
    x = _write(tmp_path / "x.aqs", np.arange(5000))
    _write(tmp_path / "e.aqs", [])
    assert main(["merge", str(tmp_path / "x.aqs"), str(tmp_path / "e.aqs"),
                 "--output", str(tmp_path / "m.aqs")]) == EXIT_OK
    capsys.readouterr()
    assert main(["query", str(tmp_path / "m.aqs"), "--rank", "100", "2500"]) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert lines == [f"rank 100 {x.rank(100)}", f"rank 2500 {x.rank(2500)}"]


def test_merge_counts(tmp_path):
    _write(tmp_path / "a.aqs", np.arange(10_000), seed=1)
    _write(tmp_path / "b.aqs", np.arange(10_000, 20_000), seed=2)
    assert main(["merge", str(tmp_path / "a.aqs"), str(tmp_path / "b.aqs"),
                 "--output", str(tmp_path / "m.aqs")]) == EXIT_OK
    assert persistence.load(tmp_path / "m.aqs").n_items == 20_000


def test_merge_mismatched_parameters(tmp_path):
    _write(tmp_path / "a.aqs", [1, 2], eps=0.1)
    _write(tmp_path / "b.aqs", [1, 2], eps=0.05)
    assert main(["merge", str(tmp_path / "a.aqs"), str(tmp_path / "b.aqs"),
                 "--output", str(tmp_path / "m.aqs")]) == EXIT_DATA


def test_query_quantiles_and_empty(tmp_path, capsys):
    _write(tmp_path / "q.aqs", [1, 3, 5, 7])
    assert main(["query", str(tmp_path / "q.aqs"), "--quantile", "0", "0.5", "1"]) == EXIT_OK
    assert capsys.readouterr().out.splitlines() == ["quantile 0.0 1", "quantile 0.5 3", "quantile 1.0 7"]
    _write(tmp_path / "e.aqs", [])
    assert main(["query", str(tmp_path / "e.aqs"), "--quantile", "0.5"]) == EXIT_DATA


def test_check_fresh_and_corrupted(tmp_path, capsys):
    _write(tmp_path / "ok.aqs", np.arange(3000))
    assert main(["check", str(tmp_path / "ok.aqs")]) == EXIT_OK
    out = capsys.readouterr().out
    assert "phi=" in out and "I11" in out
    s = Sketch.create(0.1, 0.125)
    s.extend(range(1000))
    m = s.levels[0].markers[0]
    s.levels[0].markers[0] = type(m)(m.length + 1, m.ghost)
    (tmp_path / "bad.aqs").write_bytes(persistence.dumps(s))
    assert main(["check", str(tmp_path / "bad.aqs")]) == EXIT_INVARIANT
    assert "I9" in capsys.readouterr().out


def test_check_garbage_file(tmp_path):
    (tmp_path / "g.aqs").write_bytes(b"nope")
    assert main(["check", str(tmp_path / "g.aqs")]) == EXIT_DATA


def test_experiment_csv(tmp_path, capsys):
    csv_path = tmp_path / "out.csv"
    assert main(["experiment", "--experiment", "error", "--n", "2000", "--trials", "2",
                 "--csv", str(csv_path)]) == EXIT_OK
    lines = csv_path.read_text().splitlines()
    assert lines[0].startswith("row,trial,target_rank,rank,estrank,err,rel_err,fail")
    assert lines[-1].startswith("summary")
    assert "max_fail_freq" in capsys.readouterr().out
