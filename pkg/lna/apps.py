from django.apps import AppConfig


class LnaConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'lna'
    verbose_name = 'Linear noise approximation'
