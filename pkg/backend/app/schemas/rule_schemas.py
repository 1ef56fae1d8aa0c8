from typing import List, Literal, Optional

from pydantic import BaseModel, ValidationError, model_validator

from app.core.exceptions import DataError
from app.models.core_model import (
    DecisionRule,
    KernelKind,
    KernelRule,
    KernelSpec,
    LinearRule,
    Standardizer,
)

RULE_FORMAT_VERSION = 1


class KernelDocument(BaseModel):
    kind: KernelKind
    bandwidth: Optional[float] = None


class StandardizationDocument(BaseModel):
    center: List[float]
    scale: List[float]


class RuleDocument(BaseModel):
    """Self-describing JSON form of a fitted decision rule"""

    format_version: int = RULE_FORMAT_VERSION
    variant: Literal["linear", "kernel"]
    coefficients: List[float]
    intercept: float
    kernel: KernelDocument
    support: Optional[List[List[float]]] = None
    standardization: Optional[StandardizationDocument] = None
    feature_names: Optional[List[str]] = None

    @model_validator(mode="after")
    def _check_shape(self):
        if self.format_version != RULE_FORMAT_VERSION:
            raise ValueError(f"unsupported rule format version {self.format_version}")
        if self.variant == "kernel":
            if self.support is None or len(self.support) != len(self.coefficients):
                raise ValueError("kernel rules need one support row per coefficient")
        elif self.support is not None:
            raise ValueError("linear rules carry no support matrix")
        return self


def rule_to_document(rule: DecisionRule, feature_names: Optional[List[str]] = None) -> RuleDocument:
    standardization = None
    if rule.standardizer is not None:
        standardization = StandardizationDocument(
            center=rule.standardizer.center.tolist(), scale=rule.standardizer.scale.tolist()
        )

    if isinstance(rule, LinearRule):
        return RuleDocument(
            variant="linear",
            coefficients=rule.weights.tolist(),
            intercept=rule.intercept,
            kernel=KernelDocument(kind=KernelKind.LINEAR),
            standardization=standardization,
            feature_names=feature_names,
        )
    if isinstance(rule, KernelRule):
        return RuleDocument(
            variant="kernel",
            coefficients=rule.coefficients.tolist(),
            intercept=rule.intercept,
            kernel=KernelDocument(kind=rule.spec.kind, bandwidth=rule.spec.bandwidth),
            support=rule.support.tolist(),
            standardization=standardization,
            feature_names=feature_names,
        )
    raise DataError(f"{type(rule).__name__} cannot be serialized")


def document_to_rule(document: RuleDocument) -> DecisionRule:
    standardizer = None
    if document.standardization is not None:
        standardizer = Standardizer(document.standardization.center, document.standardization.scale)

    if document.variant == "linear":
        return LinearRule(document.coefficients, document.intercept, standardizer=standardizer)
    spec = KernelSpec(document.kernel.kind, document.kernel.bandwidth)
    return KernelRule(spec, document.support, document.coefficients, document.intercept, standardizer=standardizer)


def parse_rule_document(text: str) -> RuleDocument:
    try:
        return RuleDocument.model_validate_json(text)
    except ValidationError as e:
        raise DataError(f"Invalid rule document: {e}") from e
