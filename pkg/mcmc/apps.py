from django.apps import AppConfig


class McmcConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'mcmc'
    verbose_name = 'Pseudo-marginal MCMC'
