import logging

import pytest

from src.settings import (
    DEFAULT_CACHE_DIR,
    DEFAULT_PATH_BUDGET,
    get_settings,
    load_environment,
    parse_log_level,
)


@pytest.fixture
def clean_env(monkeypatch):
    for name in ("LOG_LEVEL", "PIL_CACHE_DIR", "PIL_PATH_BUDGET", "PIL_WORKERS"):
        monkeypatch.delenv(name, raising=False)
    return monkeypatch


def test_defaults(clean_env):
    settings = get_settings()
    assert settings.log_level == logging.INFO
    assert settings.cache_dir == DEFAULT_CACHE_DIR
    assert settings.path_budget == DEFAULT_PATH_BUDGET == 2**28
    assert settings.workers == 1


def test_environment_overrides(clean_env):
    clean_env.setenv("LOG_LEVEL", "debug")
    clean_env.setenv("PIL_CACHE_DIR", "/tmp/pil")
    clean_env.setenv("PIL_PATH_BUDGET", "1000")
    clean_env.setenv("PIL_WORKERS", "4")
    settings = get_settings()
    assert settings.log_level == logging.DEBUG
    assert settings.cache_dir == "/tmp/pil"
    assert settings.path_budget == 1000
    assert settings.workers == 4


def test_bad_integers_fall_back_to_defaults(clean_env, caplog):
    clean_env.setenv("PIL_WORKERS", "many")
    clean_env.setenv("PIL_PATH_BUDGET", "-5")
    with caplog.at_level(logging.WARNING):
        settings = get_settings()
    assert settings.workers == 1
    assert settings.path_budget == DEFAULT_PATH_BUDGET
    assert "PIL_WORKERS" in caplog.text


@pytest.mark.parametrize(
    "name, level",
    [("WARNING", logging.WARNING), (" error ", logging.ERROR), ("verbose", logging.INFO), (None, logging.INFO)],
)
def test_parse_log_level(name, level):
    assert parse_log_level(name) == level


def test_load_environment_reads_dotenv(clean_env, mocker, tmp_path):
    mocker.patch.dict("os.environ")
    (tmp_path / ".env").write_text("PIL_WORKERS=3\n")
    clean_env.chdir(tmp_path)
    assert load_environment() is not None
    assert get_settings().workers == 3
