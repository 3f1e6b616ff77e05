"""
Custom validators for the sampling engine's input documents.
Provides reusable validation logic with meaningful error messages.
"""
from django.core.exceptions import ValidationError
from django.utils.deconstruct import deconstructible


@deconstructible
class GridDimensionValidator:
    """
    Validator for grid rows/cols.
    """

    def __init__(self, min_value=1, max_value=64):
        self.min_value = min_value
        self.max_value = max_value

    def __call__(self, value):
        if value is None or value < self.min_value:
            raise ValidationError(
                f"Grid dimension must be at least {self.min_value}",
                code='min_value',
                params={'min_value': self.min_value, 'value': value}
            )

        if value > self.max_value:
            raise ValidationError(
                f"Grid dimension cannot exceed {self.max_value}",
                code='max_value',
                params={'max_value': self.max_value, 'value': value}
            )


@deconstructible
class StrictlyIncreasingValidator:
    """
    Validator for sweep lists of K=S values.
    """

    def __init__(self, min_value=1):
        self.min_value = min_value

    def __call__(self, value):
        if not value:
            raise ValidationError("Sweep list cannot be empty", code='required')

        for item in value:
            if item < self.min_value:
                raise ValidationError(
                    f"Sweep entries must be at least {self.min_value} (got {item})",
                    code='min_value'
                )

        for previous, current in zip(value, value[1:]):
            if current <= previous:
                raise ValidationError(
                    f"Sweep list must be strictly increasing ({previous} is followed by {current})",
                    code='not_increasing'
                )
