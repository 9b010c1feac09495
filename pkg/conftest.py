import os

import django

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'spatial_project.settings')
django.setup()
