import pytest

from runner.config import preset_config, with_overrides
from runner.orchestrator import run_experiment
from solver.metrics import write_errors_csv


pytestmark = pytest.mark.slow


def _sweep(name, **time):
    config = preset_config(name)
    if time:
        config = with_overrides(config, {"time": time})
    context = run_experiment(config, mode="convergence", write=False)
    assert not context["errors"], context["errors"]
    return context


def _errors(context, scheme):
    return [r.l2_error for r in context["records"] if r.scheme == scheme]


def test_table1_errors_against_exact_are_spatially_dominated():
    context = _sweep("table1")
    fitted, fdm = _errors(context, "fitted"), _errors(context, "fdm")
    # psi grows by under 2% over the horizon, so the 10^3 mesh error is all that is left
    assert 0.1 < min(fitted) and max(fitted) < 0.25
    assert max(fitted) / min(fitted) < 1.05
    assert all(f < d for f, d in zip(fitted, fdm))


def test_table1_time_only_errors_converge_at_first_order():
    context = _sweep("table1", reference_steps=1200)
    errors = context["time_errors"]["fitted"]
    assert sorted(errors) == [50, 100, 150, 200]
    values = [errors[m] for m in sorted(errors)]
    assert all(a > b > 0.0 for a, b in zip(values, values[1:]))
    assert 0.6 <= context["time_orders"]["fitted"] <= 1.2


@pytest.mark.parametrize("name", ["table1", "table2"])
def test_policy_iteration_is_economical(name):
    context = _sweep(name)
    assert max(r.max_policy_iters for r in context["records"]) <= 5


def test_table1_is_deterministic(tmp_path):
    first = write_errors_csv(_sweep("table1")["records"], tmp_path / "a.csv")
    second = write_errors_csv(_sweep("table1")["records"], tmp_path / "b.csv")
    assert first.read_bytes() == second.read_bytes()
