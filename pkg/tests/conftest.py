import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- shared small trained system (a few seconds to build) ---------------------------

SMALL_TRAIN = dict(learning_rates=(0.1, 0.01), hidden_sizes=(4, 6), max_iter=300)


@pytest.fixture(scope="session")
def small_cfg():
    from nrfar.neural import TrainConfig
    from nrfar.pipeline import PipelineConfig

    return PipelineConfig(train=TrainConfig(**SMALL_TRAIN))


@pytest.fixture(scope="session")
def small_corpus():
    from nrfar.synth import make_corpus

    return make_corpus(4, 3600.0, seed=3)


@pytest.fixture(scope="session")
def small_labeled(small_corpus, small_cfg):
    from nrfar.protocol import label_clean

    return label_clean(small_corpus, small_cfg)


@pytest.fixture(scope="session")
def small_models(small_labeled, small_cfg):
    from nrfar.pipeline import train_nrfar

    return train_nrfar(list(small_labeled.values()), small_cfg)


@pytest.fixture(scope="session")
def model_files(small_models, tmp_path_factory):
    d = tmp_path_factory.mktemp("models")
    small_models.jm.save(d / "jm.json")
    small_models.activity.save(d / "activity.json")
    for k in range(2):
        small_models.jm.save(d / f"fold{k}_jm.json")
        small_models.activity.save(d / f"fold{k}_activity.json")
    return d


# -- acceptance report ----------------------------------------------------------------

ACCEPTANCE: dict[int, tuple[bool, str]] = {}
N_CRITERIA = 8


@pytest.fixture
def report():
    def _record(n: int, ok: bool, detail: str) -> None:
        ACCEPTANCE[n] = (bool(ok), detail)
        print(f"criterion {n}: {'PASS' if ok else 'FAIL'} | {detail}")
    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in range(1, N_CRITERIA + 1):
        ok, detail = ACCEPTANCE.get(n, (False, "not run"))
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'} | {detail}")
