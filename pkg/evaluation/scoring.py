"""URL and domain accuracy, and hallucinated domains.

A URL counts when the extracted and true strings are equal after
normalization.  A domain is hallucinated when it was extracted but is not a
host of any true URL of the same sample.  Accuracies are exact fractions.
"""
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, List, Optional, Sequence, Tuple

from evaluation.truth import EmptyCorpus, GroundTruthEntry
from iocs.extract import ExtractionResult
from iocs.urls import strip_trailing_slash, url_to_domain


@dataclass(frozen=True)
class PerSampleScore:
    """Scoring of one sample.

    Attributes:
        sample_id: Truth sample id
        extracted: What the engine returned
        true_positive_urls: True URLs that were extracted
        missed_urls: True URLs that were not
        true_positive_domains: True domains that were extracted
        hallucinated_domains: Extracted domains absent from the truth
        truth_domains: Unique hosts of the true URLs
        refused: The model declined the task
        error: Why the sample could not be processed, if it could not
    """
    sample_id: str
    extracted: ExtractionResult
    true_positive_urls: Tuple[str, ...]
    missed_urls: Tuple[str, ...]
    true_positive_domains: Tuple[str, ...]
    hallucinated_domains: Tuple[str, ...]
    truth_domains: Tuple[str, ...]
    refused: bool = False
    error: Optional[str] = None

    @property
    def truth_url_count(self) -> int:
        return len(self.true_positive_urls) + len(self.missed_urls)

    def to_row(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "provenance": self.extracted.provenance.value,
            "truth_urls": self.truth_url_count,
            "extracted_urls": len(self.extracted.urls),
            "tp_urls": len(self.true_positive_urls),
            "missed_urls": len(self.missed_urls),
            "truth_domains": len(self.truth_domains),
            "tp_domains": len(self.true_positive_domains),
            "hallucinated_domains": len(self.hallucinated_domains),
            "refused": self.refused,
            "error": self.error or "",
        }

    def to_dict(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "extracted": self.extracted.to_dict(),
            "true_positive_urls": list(self.true_positive_urls),
            "missed_urls": list(self.missed_urls),
            "true_positive_domains": list(self.true_positive_domains),
            "hallucinated_domains": list(self.hallucinated_domains),
            "refused": self.refused,
            "error": self.error,
        }


def _unique(items: Iterable[str]) -> Tuple[str, ...]:
    return tuple(dict.fromkeys(items))


def score_sample(extracted: ExtractionResult, truth: GroundTruthEntry, lenient: bool = False,
                 fold_www: bool = False, refused: bool = False,
                 error: Optional[str] = None) -> PerSampleScore:
    """Compare one extraction with its ground truth.

    Args:
        extracted: Engine output for the sample
        truth: The sample's truth entry
        lenient: Ignore trailing ``/`` when comparing URLs
        fold_www: Treat ``www.host`` and ``host`` as one domain
        refused: Recorded on the score as is
        error: Recorded on the score as is
    """
    key = strip_trailing_slash if lenient else (lambda url: url)
    found = {key(url) for url in extracted.urls}
    true_positive = tuple(u for u in truth.urls if key(u) in found)
    missed = tuple(u for u in truth.urls if key(u) not in found)

    truth_domains = _unique(url_to_domain(u, fold_www) for u in truth.urls)
    extracted_domains = _unique(url_to_domain(u, fold_www) for u in extracted.urls)
    true_positive_domains = tuple(d for d in truth_domains if d in extracted_domains)
    hallucinated = tuple(d for d in extracted_domains if d not in truth_domains)
    return PerSampleScore(truth.sample_id, extracted, true_positive, missed, true_positive_domains,
                          hallucinated, truth_domains, refused, error)


@dataclass
class EvalReport:
    """Corpus-level results.

    Attributes:
        url_accuracy: Extracted true URLs over all true URLs (micro average)
        domain_accuracy: Extracted true domains over all true domains, per-sample unique
        hallucinated_domain_count: Hallucinated domains summed over samples
        top_hallucinated: (domain, count) by count descending, then domain
        per_sample: Scores in truth order
        refusal_count: Samples the model declined
        error_count: Samples that could not be read or decoded
        macro_url_accuracy: Mean per-sample URL accuracy, when requested
        macro_domain_accuracy: Mean per-sample domain accuracy, when requested
    """
    url_accuracy: Fraction
    domain_accuracy: Fraction
    hallucinated_domain_count: int
    top_hallucinated: List[Tuple[str, int]]
    per_sample: List[PerSampleScore] = field(default_factory=list)
    refusal_count: int = 0
    error_count: int = 0
    macro_url_accuracy: Optional[Fraction] = None
    macro_domain_accuracy: Optional[Fraction] = None

    def to_dict(self) -> dict:
        data = {
            "url_accuracy": float(self.url_accuracy),
            "domain_accuracy": float(self.domain_accuracy),
            "hallucinated_domain_count": self.hallucinated_domain_count,
            "top_hallucinated": [[domain, count] for domain, count in self.top_hallucinated],
            "refusal_count": self.refusal_count,
            "error_count": self.error_count,
            "sample_count": len(self.per_sample),
            "per_sample": [score.to_dict() for score in self.per_sample],
        }
        if self.macro_url_accuracy is not None:
            data["macro_url_accuracy"] = float(self.macro_url_accuracy)
            data["macro_domain_accuracy"] = float(self.macro_domain_accuracy)
        return data

    def summary_line(self) -> str:
        return (f"url {float(self.url_accuracy) * 100:.1f}% "
                f"domain {float(self.domain_accuracy) * 100:.1f}% "
                f"halluc {self.hallucinated_domain_count} refusals {self.refusal_count}")


def _ratio(numerator: int, denominator: int) -> Fraction:
    return Fraction(numerator, denominator) if denominator else Fraction(0)


def aggregate(scores: Sequence[PerSampleScore], macro: bool = False) -> EvalReport:
    """Combine per-sample scores.

    Raises:
        EmptyCorpus: If ``scores`` is empty
    """
    if not scores:
        raise EmptyCorpus("no samples to aggregate")
    tp_urls = sum(len(s.true_positive_urls) for s in scores)
    truth_urls = sum(s.truth_url_count for s in scores)
    tp_domains = sum(len(s.true_positive_domains) for s in scores)
    truth_domains = sum(len(s.truth_domains) for s in scores)

    hallucinated = Counter(d for s in scores for d in s.hallucinated_domains)
    top = sorted(hallucinated.items(), key=lambda item: (-item[1], item[0]))

    report = EvalReport(
        url_accuracy=_ratio(tp_urls, truth_urls),
        domain_accuracy=_ratio(tp_domains, truth_domains),
        hallucinated_domain_count=sum(hallucinated.values()),
        top_hallucinated=top,
        per_sample=list(scores),
        refusal_count=sum(1 for s in scores if s.refused),
        error_count=sum(1 for s in scores if s.error),
    )
    if macro:
        report.macro_url_accuracy = sum(
            (_ratio(len(s.true_positive_urls), s.truth_url_count) for s in scores), Fraction(0)
        ) / len(scores)
        report.macro_domain_accuracy = sum(
            (_ratio(len(s.true_positive_domains), len(s.truth_domains)) for s in scores), Fraction(0)
        ) / len(scores)
    return report
