from django.db import models

from experiments.bundles import ALGORITHMS


class RunRecord(models.Model):
    """One completed inference run. Chains themselves stay on disk in ``output_dir``."""

    ALGORITHM_CHOICES = [(name, name) for name in ALGORITHMS]

    experiment = models.CharField(max_length=255)
    algorithm = models.CharField(max_length=20, choices=ALGORITHM_CHOICES)
    seed = models.BigIntegerField()
    particles = models.PositiveIntegerField(null=True, blank=True)
    iterations = models.PositiveIntegerField()
    alpha1 = models.FloatField()
    alpha2_given_1 = models.FloatField(null=True, blank=True)
    ess_min = models.FloatField(null=True, blank=True)
    wall_time = models.FloatField(help_text="Seconds spent in the chain")
    filter_calls = models.PositiveBigIntegerField(default=0)
    output_dir = models.CharField(max_length=500)
    config = models.JSONField(default=dict)
    created_at = models.DateTimeField(auto_now_add=True)

    class Meta:
        ordering = ['-created_at']

    def __str__(self):
        return f"{self.algorithm} on {self.experiment} (seed {self.seed})"
