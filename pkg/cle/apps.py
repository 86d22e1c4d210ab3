from django.apps import AppConfig


class CleConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'cle'
    verbose_name = 'Chemical Langevin equation'
