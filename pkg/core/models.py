from __future__ import annotations

from django.db import models


class TimeStampedModel(models.Model):
    """Abstract base model with created/updated timestamps."""

    created_at = models.DateTimeField(auto_now_add=True)
    updated_at = models.DateTimeField(auto_now=True)

    class Meta:
        abstract = True


class ExperimentRun(TimeStampedModel):
    STATUS_RUNNING = "RUNNING"
    STATUS_PASSED = "PASSED"
    STATUS_FAILED = "FAILED"
    STATUS_ERROR = "ERROR"

    STATUS_CHOICES = [
        (STATUS_RUNNING, "Running"),
        (STATUS_PASSED, "Passed"),
        (STATUS_FAILED, "Failed"),
        (STATUS_ERROR, "Internal error"),
    ]

    command = models.CharField(max_length=32)
    model_descriptor = models.CharField(max_length=64, blank=True)
    seed = models.BigIntegerField()
    config = models.JSONField(default=dict)
    status = models.CharField(max_length=10, choices=STATUS_CHOICES, default=STATUS_RUNNING)
    exit_code = models.PositiveSmallIntegerField(null=True, blank=True)
    report_path = models.CharField(max_length=512, blank=True)
    seconds = models.FloatField(null=True, blank=True)

    class Meta:
        ordering = ["-created_at"]

    def __str__(self) -> str:
        return f"{self.command} #{self.pk} ({self.get_status_display()})"


class CheckRecord(TimeStampedModel):
    KIND_PASS = "pass"
    KIND_INFO = "info"

    KIND_CHOICES = [
        (KIND_PASS, "Pass/fail"),
        (KIND_INFO, "Informational"),
    ]

    run = models.ForeignKey(ExperimentRun, on_delete=models.CASCADE, related_name="checks")
    name = models.CharField(max_length=128)
    claim = models.TextField()
    measured = models.FloatField(null=True)
    target = models.FloatField(null=True, blank=True)
    tolerance = models.FloatField(null=True, blank=True)
    kind = models.CharField(max_length=4, choices=KIND_CHOICES, default=KIND_PASS)
    passed = models.BooleanField(null=True)

    class Meta:
        unique_together = ("run", "name")
        ordering = ["id"]

    def __str__(self) -> str:
        verdict = "info" if self.passed is None else ("ok" if self.passed else "FAILED")
        return f"{self.name}: {self.measured} [{verdict}]"
