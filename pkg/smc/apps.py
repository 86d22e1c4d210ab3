from django.apps import AppConfig


class SmcConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'smc'
    verbose_name = 'Sequential Monte Carlo'
