from django.apps import AppConfig


class SsaConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'ssa'
    verbose_name = 'Exact jump-process simulation'
