from django.db import models


class ExperimentRunManager(models.Manager):
    """Manager with shortcuts for the common ledger queries."""

    def completed(self):
        return self.get_queryset().filter(status=ExperimentRun.STATUS_COMPLETED)

    def failed(self):
        return self.get_queryset().filter(status=ExperimentRun.STATUS_FAILED)

    def for_sweep(self, label):
        """Rows of one sweep, in the order they were run."""
        return self.get_queryset().filter(command='sweep', label=label).order_by('created_at', 'id')


class ExperimentRun(models.Model):
    """
    One row of the run ledger: a single `run` or one (method, K=S, seed) row of a `sweep`.
    Metric columns stay empty for failed rows.
    """
    STATUS_COMPLETED = 'completed'
    STATUS_FAILED = 'failed'
    STATUS_CHOICES = [
        (STATUS_COMPLETED, 'Completed'),
        (STATUS_FAILED, 'Failed'),
    ]

    command = models.CharField(max_length=20, help_text="Management command that produced this row")
    label = models.CharField(
        max_length=200,
        blank=True,
        help_text="Run or sweep directory name, shared by every row of a sweep"
    )
    method = models.CharField(max_length=10, help_text="'df' for Decision Flow, 'mcmc' for the baseline")
    mode = models.CharField(max_length=10, blank=True, help_text="exact or empirical (Decision Flow only)")
    n_paths = models.PositiveIntegerField(null=True, blank=True, help_text="Prior paths K")
    n_samples = models.PositiveIntegerField(help_text="Samples S")
    seed = models.BigIntegerField(help_text="Master seed of the row")
    reference = models.CharField(max_length=10, help_text="exact or mcmc")
    delta1 = models.FloatField(null=True, blank=True)
    delta2 = models.FloatField(null=True, blank=True)
    tv = models.FloatField(null=True, blank=True, help_text="TV of the posterior terminal marginal")
    sample_tv = models.FloatField(null=True, blank=True, help_text="TV of the sample histogram")
    status = models.CharField(max_length=10, choices=STATUS_CHOICES, default=STATUS_COMPLETED)
    error_class = models.CharField(max_length=20, blank=True)
    error_message = models.TextField(blank=True)
    run_dir = models.CharField(max_length=500, blank=True)
    timings = models.JSONField(default=dict, help_text="Wall-clock milliseconds per stage")
    created_at = models.DateTimeField(auto_now_add=True)

    objects = ExperimentRunManager()

    def __str__(self):
        size = f"K={self.n_paths} S={self.n_samples}" if self.n_paths else f"S={self.n_samples}"
        return f"{self.method} {size} seed={self.seed} ({self.status})"

    class Meta:
        verbose_name = "Experiment Run"
        verbose_name_plural = "Experiment Runs"
        ordering = ['-created_at']
        indexes = [
            models.Index(fields=['label', 'method'], name='flow_run_label_method_idx'),
            models.Index(fields=['status'], name='flow_run_status_idx'),
        ]
