"""Span-exact F1, annotation quality auditing, and corpus overlap rates."""

from collections import defaultdict
from dataclasses import dataclass, field

from .corpus import bio_to_spans
from .errors import ContractError


@dataclass
class SpanMetrics:
    """Exact-match counts per entity type plus micro totals.

    A predicted span counts as a true positive iff type, start and end
    all match a gold span; each gold span matches at most once.
    """
    counts: dict = field(default_factory=lambda: defaultdict(lambda: [0, 0, 0]))

    def add(self, etype, tp=0, fp=0, fn=0):
        c = self.counts[etype]
        c[0] += tp
        c[1] += fp
        c[2] += fn

    @staticmethod
    def _prf(tp, fp, fn):
        p = tp / (tp + fp) if tp + fp else 0.0
        r = tp / (tp + fn) if tp + fn else 0.0
        f = 2 * p * r / (p + r) if p + r else 0.0
        return p, r, f

    def per_type(self):
        return {t: self._prf(*c) for t, c in sorted(self.counts.items())}

    def micro(self):
        tp = sum(c[0] for c in self.counts.values())
        fp = sum(c[1] for c in self.counts.values())
        fn = sum(c[2] for c in self.counts.values())
        return self._prf(tp, fp, fn)

    @property
    def micro_precision(self):
        return self.micro()[0]

    @property
    def micro_recall(self):
        return self.micro()[1]

    @property
    def micro_f1(self):
        return self.micro()[2]

    def to_text(self):
        """Table with percentages at 2 decimals."""
        lines = [f"{'type':<10} {'prec':>7} {'recall':>7} {'f1':>7}"]
        for t, (p, r, f) in self.per_type().items():
            lines.append(f"{t:<10} {100 * p:7.2f} {100 * r:7.2f} {100 * f:7.2f}")
        p, r, f = self.micro()
        lines.append(f"{'micro':<10} {100 * p:7.2f} {100 * r:7.2f} {100 * f:7.2f}")
        return "\n".join(lines) + "\n"

    def to_kv(self):
        lines = []
        for t, (p, r, f) in self.per_type().items():
            lines += [f"precision {t} {100 * p:.2f}",
                      f"recall {t} {100 * r:.2f}",
                      f"f1 {t} {100 * f:.2f}"]
        p, r, f = self.micro()
        lines += [f"precision micro {100 * p:.2f}",
                  f"recall micro {100 * r:.2f}",
                  f"f1 micro {100 * f:.2f}"]
        return "\n".join(lines) + "\n"


def span_f1(gold, pred):
    """Exact-match span F1; gold tags read strictly, predictions with repair."""
    if len(gold) != len(pred):
        raise ContractError(
            f"{len(gold)} gold sentences but {len(pred)} predictions")
    metrics = SpanMetrics()
    for i, (g, p) in enumerate(zip(gold, pred)):
        if len(g) != len(p):
            raise ContractError(
                f"sentence {i}: gold length {len(g)} != prediction length {len(p)}")
        g_spans = set(bio_to_spans(g.tags, repair=False))
        p_spans = set(bio_to_spans(p.tags, repair=True))
        for span in p_spans & g_spans:
            metrics.add(span.type, tp=1)
        for span in p_spans - g_spans:
            metrics.add(span.type, fp=1)
        for span in g_spans - p_spans:
            metrics.add(span.type, fn=1)
    return metrics


def annotation_quality(silver, clean):
    """Silver annotations scored as predictions against the clean subset."""
    return span_f1(clean, silver)


def _token_sets(corpus, case_sensitive=True):
    out = set()
    for sent in corpus:
        tokens = sent.tokens if hasattr(sent, "tokens") else sent
        for tok in tokens:
            out.add(tok if case_sensitive else tok.lower())
    return out


def vocab_overlap(corpus_a, corpus_b, case_sensitive=True):
    """|V_A intersect V_B| / |V_B|; B is the target/reference corpus."""
    va = _token_sets(corpus_a, case_sensitive)
    vb = _token_sets(corpus_b, case_sensitive)
    if not va or not vb:
        raise ContractError("both corpora must be nonempty")
    return len(va & vb) / len(vb)


def _tag_type(tag):
    return tag[2:] if tag.startswith(("B-", "I-")) else tag


def _word_tag_pairs(corpus, case_sensitive=True):
    pairs = defaultdict(set)
    for sent in corpus:
        for tok, tag in zip(sent.tokens, sent.tags):
            pairs[_tag_type(tag)].add(tok if case_sensitive else tok.lower())
    return pairs


def word_tag_overlap(corpus_a, corpus_b, tags=("PER", "LOC", "ORG", "O"),
                     case_sensitive=True):
    """Per-tag fraction of B's (word, tag) pairs also present in A."""
    pa = _word_tag_pairs(corpus_a, case_sensitive)
    pb = _word_tag_pairs(corpus_b, case_sensitive)
    rates = {}
    for tag in tags:
        denom = pb.get(tag, set())
        rates[tag] = len(pa.get(tag, set()) & denom) / len(denom) if denom else 0.0
    return rates


def overlap_report(corpus_a, corpus_b, name_a="A", name_b="B"):
    """Key-value overlap report; B is always the reference side."""
    lines = [f"reference_corpus {name_b}",
             "denominator target-vocabulary",
             f"vocab_overlap {100 * vocab_overlap(corpus_a, corpus_b):.2f}"]
    for tag, rate in word_tag_overlap(corpus_a, corpus_b).items():
        lines.append(f"word_tag_overlap {tag} {100 * rate:.2f}")
    return "\n".join(lines) + "\n"
