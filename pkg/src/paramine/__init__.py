"""paramine: paraphrastic sentence embeddings from back-translated bitext, with
the corpus statistics, language model, reference classifier and filters used
to select training pairs."""

__version__ = "0.1.0"

from .corpus import PairCorpus, SentencePair, Vocabulary, load_pairs, save_pairs
from .evaluation import pearson, spearman, sts_evaluate
from .filters import FilterConfig, TuningGrid, apply_filters, score_pairs, tune_filter
from .lm import NgramLM
from .refclass import ReferenceClassifier
from .synthgen import gen_mt_like, gen_paraphrase_corpus
from .trainer import ParaphraseEmbedder

__all__ = [
    "PairCorpus", "SentencePair", "Vocabulary", "load_pairs", "save_pairs",
    "pearson", "spearman", "sts_evaluate",
    "FilterConfig", "TuningGrid", "apply_filters", "score_pairs", "tune_filter",
    "NgramLM", "ReferenceClassifier", "ParaphraseEmbedder",
    "gen_mt_like", "gen_paraphrase_corpus",
]
