"""Extraction of spatial configurations from navigation instructions

An instruction is split into sentences, every sentence into spatial
configurations - one per motion indicator (a verb phrase) - and every
configuration is annotated with its landmarks (noun phrases) and the main
landmark (the landmark closest to the root of the dependency tree). A pseudo
delimiter token is inserted after each configuration.

Dependency parses are either read from 10-column tab-separated files or
produced by a deterministic fallback tagger that is adequate for templated
instructions.
"""

from spcnav.paths import locate_file, package_data_file, load_schema
from spcnav.utils import SpcNavError, dump_jsonl, load_jsonl

import functools
import jsonschema
import logging
import networkx as nx
import nltk
import pyrsistent
import re

logger = logging.getLogger("spcnav")

# The text of the pseudo delimiter token in the token stream
DELIMITER = "<P>"


class ParseError(SpcNavError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class StructureError(SpcNavError):
    pass


class InstructionError(SpcNavError):
    pass


class AnnotationError(SpcNavError):
    pass


#
# Domain types
#


class Token(pyrsistent.PClass):
    """A token of a dependency-parsed sentence

    The root of a sentence points to itself as its head.
    """

    index = pyrsistent.field(type=int, mandatory=True)
    text = pyrsistent.field(type=str, mandatory=True)
    lemma = pyrsistent.field(type=str, mandatory=True)
    pos = pyrsistent.field(type=str, mandatory=True)
    head = pyrsistent.field(type=int, mandatory=True)
    deprel = pyrsistent.field(type=str, mandatory=True)

    @property
    def is_root(self):
        return self.head == self.index


class Span(pyrsistent.PClass):
    """A half-open range of token indices"""

    start = pyrsistent.field(type=int, mandatory=True)
    end = pyrsistent.field(type=int, mandatory=True)
    __invariant__ = lambda s: (0 <= s.start < s.end, "Span must be non-empty")

    def __len__(self):
        return self.end - self.start

    def __contains__(self, index):
        return self.start <= index < self.end

    def within(self, other):
        return other.start <= self.start and self.end <= other.end

    def indices(self):
        return range(self.start, self.end)

    def as_list(self):
        return [self.start, self.end]

    @classmethod
    def from_list(cls, data):
        return cls(start=data[0], end=data[1])


def _optional(type_):
    return pyrsistent.field(type=(type_, type(None)), initial=None)


def _configuration_invariant(c):
    inside = all(
        s.within(c.tokens)
        for s in [c.motion_indicator, c.spatial_indicator] + list(c.landmarks)
        if s is not None
    )
    main = (len(c.landmarks) == 0 and c.main_landmark is None) or (
        c.main_landmark is not None and 0 <= c.main_landmark < len(c.landmarks)
    )
    return (
        (inside, "Role spans must lie inside the configuration"),
        (c.delimiter_pos == c.tokens.end, "Delimiter must follow the configuration"),
        (main, "Main landmark must index an existing landmark"),
    )


class SpatialConfiguration(pyrsistent.PClass):
    """A spatial configuration with its semantic roles

    All spans index the flattened token sequence of the instruction.
    """

    tokens = pyrsistent.field(type=Span, mandatory=True)
    motion_indicator = _optional(Span)
    spatial_indicator = _optional(Span)
    landmarks = pyrsistent.pvector_field(Span)
    main_landmark = _optional(int)
    delimiter_pos = pyrsistent.field(type=int, mandatory=True)
    __invariant__ = _configuration_invariant

    @property
    def main_landmark_span(self):
        if self.main_landmark is None:
            return None
        return self.landmarks[self.main_landmark]

    def _serialize(self):
        def _span(s):
            return None if s is None else s.as_list()

        return {
            "span": self.tokens.as_list(),
            "motion": _span(self.motion_indicator),
            "spatial": _span(self.spatial_indicator),
            "landmarks": [l.as_list() for l in self.landmarks],
            "main_landmark": self.main_landmark,
        }

    @classmethod
    def _deserialize(cls, data):
        def _span(s):
            return None if s is None else Span.from_list(s)

        tokens = Span.from_list(data["span"])
        return cls(
            tokens=tokens,
            motion_indicator=_span(data.get("motion")),
            spatial_indicator=_span(data.get("spatial")),
            landmarks=[Span.from_list(l) for l in data.get("landmarks", [])],
            main_landmark=data.get("main_landmark"),
            delimiter_pos=tokens.end,
        )


class GoldAnnotation(pyrsistent.PClass):
    """Gold configuration boundaries and role spans of one instruction"""

    instruction_id = pyrsistent.field(type=str, mandatory=True)
    configurations = pyrsistent.pvector_field(SpatialConfiguration)

    def _serialize(self):
        return {
            "instruction_id": self.instruction_id,
            "configurations": [c._serialize() for c in self.configurations],
        }

    @classmethod
    def _deserialize(cls, data):
        jsonschema.validate(instance=data, schema=load_schema("annotation.json"))
        return cls(
            instruction_id=str(data["instruction_id"]),
            configurations=[
                SpatialConfiguration._deserialize(c) for c in data["configurations"]
            ],
        )


class ParsedInstruction(pyrsistent.PClass):
    """An instruction split into an ordered list of spatial configurations"""

    sentences = pyrsistent.pvector_field(pyrsistent.PVector)
    configurations = pyrsistent.pvector_field(SpatialConfiguration)
    token_stream = pyrsistent.pvector_field(str)

    @property
    def tokens(self):
        """The flattened tokens of all sentences"""
        return [t for s in self.sentences for t in s]

    @property
    def m(self):
        return len(self.configurations)

    def stream_span(self, i):
        """The span of configuration i within the token stream, delimiter included"""
        c = self.configurations[i]
        return Span(start=c.tokens.start + i, end=c.tokens.end + i + 1)

    def span_text(self, span):
        if span is None:
            return None
        tokens = self.tokens
        return " ".join(tokens[i].text.lower() for i in span.indices())

    def configuration_texts(self):
        """Readable renderings of the configurations

        Punctuation and leading coordinating conjunctions are omitted.
        """
        tokens = self.tokens
        texts = []
        for c in self.configurations:
            words = [tokens[i] for i in c.tokens.indices() if tokens[i].pos != "PUNCT"]
            while words and words[0].pos == "CCONJ":
                words = words[1:]
            texts.append(" ".join(t.text.lower() for t in words))
        return texts

    def to_annotation(self, instruction_id):
        return GoldAnnotation(
            instruction_id=str(instruction_id), configurations=self.configurations
        )

    def _serialize(self, instruction_id=None):
        data = self.to_annotation(
            "" if instruction_id is None else instruction_id
        )._serialize()
        data["tokens"] = [t.text for t in self.tokens]
        data["texts"] = self.configuration_texts()
        return data


class MotionLexicon:
    def __init__(self, phrases):
        """A lexicon of (multi-word) verb phrases used as motion indicators

        Lookup is longest-match-first. Phrases are normalized to lowercase.

        :param phrases:
            An iterable of phrases, words separated by whitespace.
        """
        normalized = set()
        for phrase in phrases:
            words = tuple(phrase.lower().split())
            if words:
                normalized.add(words)
        self.phrases = frozenset(normalized)

        # Index phrases by their first word, longest first
        self._by_head = {}
        for words in sorted(self.phrases, key=lambda p: (-len(p), p)):
            self._by_head.setdefault(words[0], []).append(words)

    @property
    def size(self):
        return len(self.phrases)

    @property
    def head_words(self):
        return frozenset(self._by_head)

    def match(self, lemmas, start):
        """The length of the longest phrase matching lemmas at position start (0 if none)"""
        for words in self._by_head.get(lemmas[start], ()):
            if tuple(lemmas[start : start + len(words)]) == words:
                return len(words)
        return 0

    def __contains__(self, phrase):
        return tuple(phrase.lower().split()) in self.phrases

    def __len__(self):
        return self.size


def load_lexicon(filename=None):
    """Load a motion lexicon from a UTF-8 text file, one phrase per line

    :param filename:
        The lexicon file. If omitted, the lexicon bundled with spcnav is used.
    :type filename: str
    """
    if filename is None:
        filename = package_data_file("motion_lexicon.txt")
    else:
        filename = locate_file(filename)

    with open(filename, "r", encoding="utf-8") as f:
        phrases = [
            line.strip()
            for line in f
            if line.strip() and not line.strip().startswith("#")
        ]
    return MotionLexicon(phrases)


@functools.lru_cache
def default_lexicon():
    return load_lexicon()


#
# Ingestion of pre-computed dependency parses
#


def validate_tree(sentence):
    """Check that the heads of a sentence form a tree

    :raises StructureError: if there is not exactly one root, a head index
        is out of range or the heads contain a cycle.
    """
    indices = [t.index for t in sentence]
    if indices != list(range(indices[0], indices[0] + len(indices))):
        raise StructureError("Token indices are not contiguous")

    roots = [t.index for t in sentence if t.is_root]
    if len(roots) != 1:
        raise StructureError(f"Expected exactly one root, found {len(roots)}")

    graph = nx.DiGraph()
    graph.add_nodes_from(indices)
    for t in sentence:
        if t.head not in graph:
            raise StructureError(f"Head {t.head} of token {t.index} is out of range")
        if not t.is_root:
            graph.add_edge(t.head, t.index)

    if not nx.is_arborescence(graph):
        raise StructureError("Dependency heads contain a cycle")

    return sentence


def _parse_token_line(line, lineno, expected_id):
    fields = line.split("\t")
    if len(fields) != 10:
        raise ParseError(f"expected 10 tab-separated columns, got {len(fields)}", lineno)

    try:
        id_ = int(fields[0])
        head = int(fields[6])
    except ValueError:
        raise ParseError("token id and head must be integers", lineno)

    if id_ != expected_id:
        raise ParseError(f"expected token id {expected_id}, got {id_}", lineno)

    # Both the 0-head convention and a self-referential root are accepted
    index = id_ - 1
    if head == 0 or (head == id_ and fields[7].lower() == "root"):
        head_index = index
    else:
        head_index = head - 1

    lemma = fields[2] if fields[2] != "_" else fields[1]
    return Token(
        index=index,
        text=fields[1],
        lemma=lemma.lower(),
        pos=fields[3].upper(),
        head=head_index,
        deprel=fields[7].lower(),
    )


def read_parsed_sentences(lines):
    """Read token-trees from an iterable of lines in the 10-column format"""
    sentences = []
    current = []

    def _finish():
        if current:
            sentences.append(pyrsistent.pvector(validate_tree(current)))
        return []

    for lineno, line in enumerate(lines, start=1):
        line = line.rstrip("\n")
        if line.strip() == "":
            current = _finish()
            continue
        if line.startswith("#"):
            continue

        # Multi-word token ranges and empty nodes do not carry tree information
        first = line.split("\t", 1)[0]
        if "-" in first or "." in first:
            continue

        current.append(_parse_token_line(line, lineno, len(current) + 1))

    _finish()
    return sentences


def load_parsed_corpus(filename):
    """Load pre-computed dependency parses

    The file contains one token per line with 10 tab-separated columns
    (id, form, lemma, pos, xpos, feats, head, deprel, deps, misc), a blank
    line between sentences. Lines starting with :code:`#` are ignored.

    :param filename:
        The corpus file to read.
    :type filename: str
    :returns:
        A list of sentences, each a sequence of :class:`Token`
    """
    with open(locate_file(filename), "r", encoding="utf-8") as f:
        return read_parsed_sentences(f)


def load_parsed_instructions(filename):
    """Load a parsed corpus where :code:`# instruction_id = ...` comments group sentences

    Sentences that follow the same instruction id comment belong to one
    instruction. Without such comments, every sentence is an instruction.
    """
    groups = []
    block = []
    current_id = None

    def _flush():
        if block:
            groups.append((current_id, read_parsed_sentences(block)))

    with open(locate_file(filename), "r", encoding="utf-8") as f:
        for line in f:
            match = re.match(r"#\s*instruction_id\s*=\s*(\S+)", line)
            if match:
                _flush()
                block = []
                current_id = match.group(1)
            else:
                block.append(line)
    _flush()

    if all(id_ is None for id_, _ in groups):
        return [(str(i), [s]) for i, s in enumerate(groups[0][1] if groups else [])]
    return groups


#
# Sentence splitting and the fallback tagger
#

_SENTENCE_BOUNDARY = re.compile(r"(?<=[.!?])\s+")
_TOKEN = re.compile(r"\w+(?:'\w+)?|[^\w\s]")


def split_sentences(raw):
    """Split raw instruction text into sentences

    Sentences end with :code:`.`, :code:`!` or :code:`?` followed by
    whitespace or the end of the text.
    """
    return [s.strip() for s in _SENTENCE_BOUNDARY.split(raw.strip()) if s.strip()]


def tokenize(text):
    return _TOKEN.findall(text)


_CLOSED_CLASSES = {
    "DET": {
        "the", "a", "an", "this", "that", "these", "those", "each", "every",
        "another", "your", "its", "their",
    },
    "PRON": {
        "you", "it", "i", "we", "they", "he", "she", "them", "yourself",
        "there", "one",
    },
    "CCONJ": {"and", "or", "but"},
    "SCONJ": {"once", "when", "until", "while", "if", "unless", "because", "where"},
    "AUX": {
        "is", "are", "be", "will", "should", "can", "was", "were", "am", "'s",
        "do", "does", "'re", "would", "could", "must",
    },
    "ADP": {
        "to", "into", "onto", "through", "past", "by", "toward", "towards",
        "up", "down", "in", "on", "at", "of", "with", "from", "near", "around",
        "across", "along", "over", "under", "between", "behind", "beside",
        "inside", "outside", "out", "off", "after", "before", "beyond", "via",
        "against", "above", "below", "underneath", "next", "front", "within",
    },
    "NUM": {
        "one", "two", "three", "four", "five", "six", "seven", "eight", "nine",
        "ten",
    },
    "ADV": {
        "left", "right", "straight", "forward", "forwards", "back", "backward",
        "backwards", "slightly", "then", "now", "finally", "again", "here",
        "ahead", "just", "immediately", "further", "also", "sharply", "away",
    },
    "ADJ": {
        "red", "blue", "green", "white", "black", "brown", "grey", "gray",
        "large", "small", "big", "little", "first", "second", "third", "last",
        "open", "closed", "glass", "wooden", "other", "long", "short", "narrow",
        "wide", "round", "tall",
    },
    "PART": {"not", "n't"},
}

# Order of lookup for words that occur in several closed classes
_CLASS_PRIORITY = ["DET", "PRON", "CCONJ", "SCONJ", "AUX", "ADP", "NUM", "ADV", "ADJ", "PART"]

MOTION_VERBS = {
    "walk", "go", "turn", "stop", "move", "head", "exit", "enter", "continue",
    "proceed", "take", "climb", "wait", "pass", "make", "jump", "follow",
    "cross", "reach", "approach", "leave", "keep", "veer", "face", "step",
    "descend", "ascend", "bear", "come", "get", "pause", "stand",
}

# Sequencing adverbs that open a new clause
CLAUSE_ADVERBS = {"then", "now", "finally", "next", "afterwards"}

# Coarse categories that open a new clause when they precede a motion indicator
_CLAUSE_OPENERS = {"SCONJ", "CCONJ", "PRON"}

_NOMINAL = {"NOUN", "PROPN"}


def _lemma(word, verbs):
    lower = word.lower()
    if lower not in verbs and lower.endswith("s") and lower[:-1] in verbs:
        return lower[:-1]
    return lower


def _fallback_pos(words, verbs):
    pos = []
    for w in words:
        lower = w.lower()
        if not re.match(r"\w", w):
            pos.append("PUNCT")
            continue
        if lower.isdigit():
            pos.append("NUM")
            continue
        for cls in _CLASS_PRIORITY:
            if lower in _CLOSED_CLASSES[cls]:
                pos.append(cls)
                break
        else:
            pos.append("VERB" if _lemma(w, verbs) in verbs else "NOUN")

    # Contextual corrections: verbs and direction words inside noun phrases
    for i in range(1, len(pos)):
        prev = pos[i - 1]
        if pos[i] in ("VERB", "ADV") and prev in ("DET", "ADJ", "NUM"):
            pos[i] = "NOUN"
        elif (
            pos[i] == "VERB"
            and prev == "NOUN"
            and i >= 2
            and pos[i - 2] in ("DET", "ADJ")
        ):
            pos[i] = "NOUN"

    return pos


def _provisional_sentence(words, pos, lemmas, offset):
    return [
        Token(index=offset + i, text=w, lemma=l, pos=p, head=offset + i, deprel="dep")
        for i, (w, p, l) in enumerate(zip(words, pos, lemmas))
    ]


def tag_sentence(text, lexicon=None, offset=0):
    """Tag and parse a raw sentence with the deterministic fallback tagger

    Part-of-speech tags come from closed-class word lists and the motion
    lexicon, all other words are nouns. The dependency heads follow a small
    set of attachment rules: motion indicators attach to the sentence root,
    landmarks to their preposition or verb and prepositions to the
    preceding landmark.

    :param text:
        The raw sentence
    :param lexicon:
        The motion lexicon. Defaults to the bundled lexicon.
    :param offset:
        The index of the first token.
    :returns:
        A validated sequence of :class:`Token`
    """
    if lexicon is None:
        lexicon = default_lexicon()

    verbs = MOTION_VERBS | lexicon.head_words
    words = tokenize(text)
    if not words:
        return pyrsistent.pvector()

    lemmas = [_lemma(w, verbs) for w in words]
    pos = _fallback_pos(words, verbs)
    provisional = _provisional_sentence(words, pos, lemmas, offset)

    motions = extract_motion_indicators(provisional, lexicon)
    configs = split_configurations(provisional, motions)
    chunks = _chunk(provisional)

    def local(i):
        return i - offset

    heads = [None] * len(words)
    deprels = ["dep"] * len(words)

    # The root is the first motion verb, else the first noun, else the first token
    if motions:
        root = motions[0].start
    else:
        nouns = [t.index for t in provisional if t.pos in _NOMINAL]
        root = nouns[0] if nouns else offset
    heads[local(root)] = root
    deprels[local(root)] = "root"

    for config in configs:
        motion = config.motion_indicator
        anchor = root if motion is None else motion.start

        if motion is not None:
            if motion.start != root:
                heads[local(motion.start)] = root
                deprels[local(motion.start)] = "conj"
            for i in range(motion.start + 1, motion.end):
                heads[local(i)] = motion.start
                deprels[local(i)] = "prt"

        last_noun = None
        for i in config.tokens.indices():
            if heads[local(i)] is not None:
                if provisional[local(i)].pos in _NOMINAL:
                    last_noun = i
                continue

            chunk = next((c for c in chunks if i in c[0]), None)
            if chunk is not None:
                span, chunk_heads = chunk
                if i in chunk_heads:
                    head, rel = chunk_heads[i]
                    if head is None:
                        # The head noun of a landmark attaches to its preposition
                        before = span.start - 1
                        if before >= offset and provisional[local(before)].pos == "ADP":
                            if motion is not None and before in motion:
                                head = motion.end - 1
                            else:
                                head = before
                            rel = "pobj"
                        else:
                            head, rel = anchor, "obj"
                    heads[local(i)] = head
                    deprels[local(i)] = rel
                    if provisional[local(i)].pos in _NOMINAL:
                        last_noun = i
                    continue

            if provisional[local(i)].pos == "ADP":
                heads[local(i)] = last_noun if last_noun is not None else anchor
                deprels[local(i)] = "prep"
            else:
                heads[local(i)] = anchor
                deprels[local(i)] = "dep"

    # The root never points elsewhere, even if a rule above assigned it
    heads[local(root)] = root
    deprels[local(root)] = "root"

    sentence = [
        t.set(head=h, deprel=r) for t, h, r in zip(provisional, heads, deprels)
    ]
    return pyrsistent.pvector(validate_tree(sentence))


#
# Motion indicators and configurations
#


def _attached(token, phrase, by_index):
    """Whether a preposition is syntactically attached to a verb phrase"""
    if token.head == token.index or token.head in phrase:
        return True
    head = by_index.get(token.head)
    return head is not None and head.pos in _NOMINAL and head.head in phrase


def extract_motion_indicators(sentence, lexicon=None):
    """Extract the motion indicators of a sentence

    A motion indicator starts at a verb. The longest lexicon phrase anchored
    at the verb is preferred over the bare verb. Prepositions directly
    following the phrase and attached to it are merged into the motion
    indicator.

    :param sentence:
        A token-tree
    :param lexicon:
        A :class:`MotionLexicon`, defaults to the bundled one
    :returns:
        A list of non-overlapping :class:`Span`, sorted by position
    """
    if lexicon is None:
        lexicon = default_lexicon()

    tokens = list(sentence)
    lemmas = [t.lemma.lower() for t in tokens]
    by_index = {t.index: t for t in tokens}

    spans = []
    i = 0
    while i < len(tokens):
        if tokens[i].pos != "VERB":
            i += 1
            continue

        length = max(lexicon.match(lemmas, i), 1)
        end = i + length
        phrase = range(tokens[i].index, tokens[i].index + length)

        # Merge verb-attached prepositions
        while (
            end < len(tokens)
            and tokens[end].pos in ("ADP", "PART")
            and _attached(tokens[end], phrase, by_index)
        ):
            end += 1
            phrase = range(phrase.start, phrase.stop + 1)

        spans.append(Span(start=tokens[i].index, end=tokens[i].index + (end - i)))
        i = end

    return spans


def _clause_start(tokens, offset, motion_start, lower_bound):
    """Walk back from a motion indicator over clause-opening words"""
    start = motion_start
    while start - 1 >= lower_bound:
        t = tokens[start - 1 - offset]
        if t.pos in _CLAUSE_OPENERS or t.lemma.lower() in CLAUSE_ADVERBS:
            start -= 1
        else:
            break
    return start


def split_configurations(sentence, motions):
    """Split a sentence into spatial configurations at its motion indicators

    Each configuration starts at its motion indicator (together with the
    clause-opening words in front of it) and extends to the start of the next
    one. Tokens before the first motion indicator attach to the first
    configuration. A sentence without motion indicators yields a single
    configuration without motion indicator.

    :param sentence:
        A token-tree
    :param motions:
        Sorted, non-overlapping motion indicator spans
    :returns:
        A list of :class:`SpatialConfiguration` without landmark annotations
    """
    tokens = list(sentence)
    if not tokens:
        return []

    offset = tokens[0].index
    end = offset + len(tokens)

    if not motions:
        return [SpatialConfiguration(tokens=Span(start=offset, end=end), delimiter_pos=end)]

    starts = [offset]
    for prev, motion in zip(motions, motions[1:]):
        starts.append(_clause_start(tokens, offset, motion.start, prev.end))
    ends = starts[1:] + [end]

    return [
        SpatialConfiguration(
            tokens=Span(start=s, end=e), motion_indicator=motion, delimiter_pos=e
        )
        for s, e, motion in zip(starts, ends, motions)
    ]


#
# Landmarks
#

_CHUNK_GRAMMAR = r"""
    NBAR: {<DT|JJ|NN>*<NN>}
    NP: {<NBAR><OF><NBAR>}
        {<NBAR>}
"""


@functools.lru_cache
def _chunker():
    return nltk.RegexpParser(_CHUNK_GRAMMAR)


def _chunk_tag(token):
    if token.lemma.lower() == "of" and token.pos == "ADP":
        return "OF"
    if token.pos in _NOMINAL:
        return "NN"
    if token.pos in ("ADJ", "NUM"):
        return "JJ"
    if token.pos == "DET":
        return "DT"
    return token.pos


def _chunk(tokens):
    """Find maximal noun phrases with nltk's regular expression chunker

    :returns:
        A list of tuples of the noun phrase span and a dictionary mapping
        token indices to (head, relation) for the tokens of the phrase; the
        head noun of the phrase maps to (None, None).
    """
    tokens = list(tokens)
    if not tokens:
        return []

    tree = _chunker().parse([(t.index, _chunk_tag(t)) for t in tokens])
    by_index = {t.index: t for t in tokens}

    result = []
    for subtree in tree.subtrees(filter=lambda t: t.label() == "NP"):
        parts = [
            [i for i, _ in child.leaves()]
            for child in subtree
            if isinstance(child, nltk.Tree)
        ]
        indices = [i for i, _ in subtree.leaves()]
        span = Span(start=min(indices), end=max(indices) + 1)

        heads = {}
        part_heads = []
        for part in parts:
            nouns = [i for i in part if by_index[i].pos in _NOMINAL]
            part_head = nouns[-1]
            part_heads.append(part_head)
            for i in part:
                if i != part_head:
                    heads[i] = (part_head, "compound" if i in nouns else "det")

        # "middle of the doorway": the first part heads the whole phrase
        heads[part_heads[0]] = (None, None)
        for part_head in part_heads[1:]:
            heads[part_head] = (part_heads[0], "nmod")
        for i in indices:
            if i not in heads:
                heads[i] = (part_heads[-1], "case")

        result.append((span, heads))

    return result


def token_depth(index, sentence):
    """The distance of a token to the root of its dependency tree"""
    by_index = {t.index: t for t in sentence}
    depth = 0
    token = by_index[index]
    while not token.is_root:
        token = by_index[token.head]
        depth += 1
        if depth > len(by_index):
            raise StructureError("Dependency heads contain a cycle")
    return depth


def landmark_head(span, sentence):
    """The noun of a landmark span that is closest to the root"""
    by_index = {t.index: t for t in sentence}
    nouns = [i for i in span.indices() if by_index[i].pos in _NOMINAL]
    if not nouns:
        return None
    return min(nouns, key=lambda i: (token_depth(i, sentence), i))


def extract_landmarks(config, sentence):
    """Extract the landmarks of a configuration

    Landmarks are maximal runs of determiners, adjectives and nouns that end
    in a noun. Noun phrases linked by "of" collapse into one landmark.
    Noun phrases whose head noun is part of the motion indicator (like
    "a left" in "make a left") are not landmarks.

    :param config:
        The configuration
    :param sentence:
        The tokens the configuration spans refer to
    :returns:
        A list of :class:`Span`
    """
    tokens = [t for t in sentence if t.index in config.tokens]
    motion = config.motion_indicator

    landmarks = []
    for span, _ in _chunk(tokens):
        head = landmark_head(span, sentence)
        if head is None:
            continue
        if motion is not None and head in motion:
            continue
        landmarks.append(span)

    return landmarks


def main_landmark_index(landmarks, sentence):
    """The index of the landmark whose head noun is closest to the root

    Ties are broken by the earliest position. Returns :code:`None` for an
    empty list of landmarks.
    """
    if len(landmarks) == 0:
        return None

    def _key(item):
        i, span = item
        head = landmark_head(span, sentence)
        return (token_depth(head, sentence), span.start, i)

    return min(enumerate(landmarks), key=_key)[0]


def select_main_landmark(config, sentence):
    """Select the main landmark of a configuration

    :returns:
        The index into the landmarks of the configuration or :code:`None`
    """
    return main_landmark_index(config.landmarks, sentence)


def _spatial_indicator(config, sentence, merged):
    """The first preposition introducing a landmark, unless one was merged into the motion"""
    if merged:
        return None
    by_index = {t.index: t for t in sentence}
    starts = {l.start for l in config.landmarks}
    for i in config.tokens.indices():
        if config.motion_indicator is not None and i in config.motion_indicator:
            continue
        if by_index[i].pos == "ADP" and i + 1 in starts:
            return Span(start=i, end=i + 1)
    return None


#
# The full pipeline
#


def _flatten(sentences):
    """Re-index sentences so that token indices run across the instruction"""
    flat = []
    offset = 0
    for sentence in sentences:
        base = sentence[0].index
        flat.append(
            pyrsistent.pvector(
                t.set(index=t.index - base + offset, head=t.head - base + offset)
                for t in sentence
            )
        )
        offset += len(sentence)
    return flat


def parse_instruction(instruction, lexicon=None):
    """Parse an instruction into spatial configurations

    :param instruction:
        Either raw instruction text or a list of dependency-parsed sentences
        (as returned by :func:`load_parsed_corpus`).
    :param lexicon:
        The motion lexicon, defaults to the bundled one.
    :type lexicon: MotionLexicon
    :raises InstructionError: if the instruction contains no tokens.
    :returns: The :class:`ParsedInstruction`
    """
    if lexicon is None:
        lexicon = default_lexicon()

    if isinstance(instruction, str):
        sentences = []
        offset = 0
        for text in split_sentences(instruction):
            sentence = tag_sentence(text, lexicon=lexicon, offset=offset)
            if len(sentence) > 0:
                sentences.append(sentence)
                offset += len(sentence)
    else:
        sentences = _flatten([list(s) for s in instruction if len(s) > 0])

    if not sentences:
        raise InstructionError("Cannot parse an empty instruction")

    flat = [t for s in sentences for t in s]
    configs = []
    for sentence in sentences:
        motions = extract_motion_indicators(sentence, lexicon)
        if not motions and configs:
            # Verbless sentences stay attached to the preceding configuration
            logger.debug(
                f"Attaching verbless sentence at token {sentence[0].index} to the preceding configuration"
            )
            last = configs[-1]
            end = sentence[-1].index + 1
            configs[-1] = last.set(tokens=Span(start=last.tokens.start, end=end), delimiter_pos=end)
            continue
        configs.extend(split_configurations(sentence, motions))

    annotated = []
    for config in configs:
        # Landmarks and the main landmark are set together to keep the invariant
        landmarks = extract_landmarks(config, flat)
        config = config.set(
            landmarks=landmarks, main_landmark=main_landmark_index(landmarks, flat)
        )

        motion = config.motion_indicator
        merged = motion is not None and any(
            flat[i].pos == "ADP" for i in motion.indices()
        )
        config = config.set(spatial_indicator=_spatial_indicator(config, flat, merged))
        annotated.append(config)

    stream = []
    for config in annotated:
        stream.extend(flat[i].text.lower() for i in config.tokens.indices())
        stream.append(DELIMITER)

    return ParsedInstruction(
        sentences=sentences, configurations=annotated, token_stream=stream
    )


#
# Annotation files and parser evaluation
#


def save_annotations(annotations, filename):
    """Write gold annotations or parser output as JSON-lines"""
    dump_jsonl([a._serialize() for a in annotations], filename)


def load_annotations(filename):
    """Read gold annotations from a JSON-lines file"""
    return [GoldAnnotation._deserialize(d) for d in load_jsonl(locate_file(filename))]


# Subordinators after which the implied order of configurations may be inverted
ORDER_RISK_WORDS = {"once", "after", "before", "until", "when"}


class ParserReport(pyrsistent.PClass):
    """Accuracies of the configuration parser against gold annotations"""

    configuration_accuracy = pyrsistent.field(type=float, mandatory=True)
    indicator_accuracy = pyrsistent.field(type=float, mandatory=True)
    landmark_accuracy = pyrsistent.field(type=float, mandatory=True)
    instructions = pyrsistent.field(type=int, mandatory=True)
    configurations = pyrsistent.field(type=int, mandatory=True)
    split_errors = pyrsistent.field(type=int, initial=0)
    order_risks = pyrsistent.field(type=int, initial=0)
    indicator_errors = pyrsistent.field(type=int, initial=0)
    landmark_errors = pyrsistent.field(type=int, initial=0)

    def _serialize(self):
        return dict(self.serialize())


def evaluate_parser(predicted, gold):
    """Score parser output against gold annotations

    For every gold configuration, the boundary is correct if a predicted
    configuration covers exactly the same tokens. Motion/spatial indicators
    and landmarks are only counted as correct for configurations with a
    correct boundary and identical spans.

    :param predicted:
        A list of :class:`ParsedInstruction` or :class:`GoldAnnotation`
    :param gold:
        A list of :class:`GoldAnnotation`, aligned with predicted
    :returns: A :class:`ParserReport`
    """
    if len(predicted) != len(gold):
        raise AnnotationError(
            f"Cannot compare {len(predicted)} predicted with {len(gold)} gold instructions"
        )

    total = 0
    boundary_ok = indicator_ok = landmark_ok = 0
    order_risks = 0

    for pred, ref in zip(predicted, gold):
        if isinstance(pred, ParsedInstruction):
            tokens = pred.tokens
            for c in pred.configurations:
                opener = tokens[c.tokens.start].lemma.lower()
                if opener in ORDER_RISK_WORDS and c.tokens.start > 0:
                    order_risks += 1
            pred = pred.to_annotation(ref.instruction_id)

        by_span = {(c.tokens.start, c.tokens.end): c for c in pred.configurations}
        for g in ref.configurations:
            total += 1
            p = by_span.get((g.tokens.start, g.tokens.end))
            if p is None:
                continue
            boundary_ok += 1
            if (
                p.motion_indicator == g.motion_indicator
                and p.spatial_indicator == g.spatial_indicator
            ):
                indicator_ok += 1
            if set(p.landmarks) == set(g.landmarks):
                landmark_ok += 1

    def _ratio(n):
        return n / total if total else 1.0

    return ParserReport(
        configuration_accuracy=float(_ratio(boundary_ok)),
        indicator_accuracy=float(_ratio(indicator_ok)),
        landmark_accuracy=float(_ratio(landmark_ok)),
        instructions=len(gold),
        configurations=total,
        split_errors=total - boundary_ok,
        order_risks=order_risks,
        indicator_errors=boundary_ok - indicator_ok,
        landmark_errors=boundary_ok - landmark_ok,
    )
