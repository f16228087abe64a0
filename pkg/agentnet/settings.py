# import our default settings
from agentnet.settings_common import *  # noqa

DEBUG = True

# offline runs replay recorded responses from here
# GATEWAY_FIXTURES_DIR = "/data/agentnet/fixtures"

# LLM_GATEWAY = dict(LLM_GATEWAY, endpoint_url="http://localhost:8000/v1/chat/completions", model_name="local-model")
