import os
import sys

# -----------------------------------------------------------------------------------
# Sets TESTING to True if this configuration is read during a unit test
# -----------------------------------------------------------------------------------
TESTING = sys.argv[1:2] == ["test"]

DEBUG = not TESTING

ADMINS = ()

DATABASES = {"default": {"ENGINE": "django.db.backends.sqlite3", "NAME": ":memory:"}}

# Make this unique, and don't share it with anybody.
SECRET_KEY = "agentnet-batch-only-no-web-surface"

TIME_ZONE = "UTC"
USE_TZ = True
USE_I18N = False

INSTALLED_APPS = (
    "agentnet.network",
    "agentnet.gateway",
    "agentnet.agents",
    "agentnet.consensus",
    "agentnet.inference",
    "agentnet.attribution",
    "agentnet.harness",
)

# -----------------------------------------------------------------------------------
# Directory Configuration
# -----------------------------------------------------------------------------------
PROJECT_DIR = os.path.join(os.path.abspath(os.path.dirname(__file__)))

TESTFILES_DIR = os.path.join(PROJECT_DIR, "../testfiles")

# request hash -> canned response documents used by --offline runs
GATEWAY_FIXTURES_DIR = os.path.join(TESTFILES_DIR, "gateway")

# -----------------------------------------------------------------------------------
# LLM gateway (chat-completion endpoint)
# -----------------------------------------------------------------------------------
LLM_GATEWAY = {
    "endpoint_url": "https://api.openai.com/v1/chat/completions",
    "api_key_env": "OPENAI_API_KEY",
    "model_name": "gpt-3.5-turbo",
    "request_timeout": 60.0,
    "max_retries": 3,
    "backoff_base": 1.0,
}

# -----------------------------------------------------------------------------------
# Agent backends, by the backend kind named in pool files
# -----------------------------------------------------------------------------------
AGENT_BACKENDS = {
    "llm": "agentnet.agents.backends.llm.LLMBackend",
    "tool": "agentnet.agents.backends.tools.ToolBackend",
    "scripted": "agentnet.agents.backends.scripted.ScriptedBackend",
}

# seconds allowed for a candidate completion plus its unit tests
UNIT_TEST_TIMEOUT = 10

AGENTNET_DEFAULT_PARALLELISM = 4

# Shapley values are computed exactly, so pools are capped
AGENTNET_MAX_SHAPLEY_AGENTS = 8
AGENTNET_MAX_SHAPLEY_SUBSETS = 20

LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "verbose": {"format": "%(levelname)s %(asctime)s %(module)s %(process)d %(thread)d %(message)s"},
        "simple": {"format": "%(levelname)s %(message)s"},
    },
    "handlers": {
        "console": {"level": "DEBUG", "class": "logging.StreamHandler", "formatter": "verbose"},
        "null": {"class": "logging.NullHandler"},
    },
    "loggers": {
        "agentnet": {"handlers": ["null"] if TESTING else ["console"], "level": "INFO", "propagate": False},
        "urllib3": {"handlers": ["console"], "level": "WARNING", "propagate": False},
    },
}
