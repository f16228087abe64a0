import os

import django

os.environ.setdefault("DJANGO_SETTINGS_MODULE", "agentnet.settings")
django.setup()
