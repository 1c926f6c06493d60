"""Procedural two-genre audio corpus, prompts, and codec stand-ins.

Genre A is ornament-heavy: fast scale tones over a drone, every note carrying
pitch-glide ornaments of 30-80 cents over 40-120 ms (local detail). Genre B is
long-form modal: slow steady phrases with a single mid-clip modulation between
two modes (long-range structure). The two generators share nothing but the
synth primitives, which keeps the genres statistically far apart for the
Frechet analytics.

Also here: the five prompt templates with their parse-back patterns, the
hashed bag-of-tokens prompt embedder, the orthonormal latent codec used by
the diffusion backbone, and the scalar waveform tokenizer used by the
autoregressive backbone.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .errors import DataError, FramingError, VocabularyError
from .rng import RngState, _hash_tag, _mix64

SAMPLE_RATE = 8000
CLIP_SAMPLES = 16384  # 2.048 s
PEAK = 0.9

GENRE_A = "GenreA_Ornament"
GENRE_B = "GenreB_Modal"
GENRES = (GENRE_A, GENRE_B)
_SHORT = {GENRE_A: "GenreA", GENRE_B: "GenreB"}

# scale interval sets in cents above the tonic (microtonal on purpose)
MODES = {
    GENRE_A: {
        "Mode-A1": [0, 112, 316, 498, 702, 814, 1018],
        "Mode-A2": [0, 204, 386, 498, 702, 906, 1088],
        "Mode-A3": [0, 90, 294, 498, 702, 792, 996],
        "Mode-A4": [0, 182, 316, 590, 702, 884, 1018],
        "Mode-A5": [0, 204, 408, 612, 702, 906, 1110],
    },
    GENRE_B: {
        "Mode-B1": [0, 151, 353, 498, 702, 853, 1055],
        "Mode-B2": [0, 204, 302, 498, 702, 906, 1004],
        "Mode-B3": [0, 98, 400, 498, 702, 800, 1102],
        "Mode-B4": [0, 253, 404, 551, 702, 955, 1106],
        "Mode-B5": [0, 147, 249, 498, 649, 853, 951],
    },
}

# accent patterns; one entry per beat, amplitude of the percussion hit
CYCLES = {
    GENRE_A: {
        "Cycle-A1": [1.0, 0.4, 0.7, 0.4, 1.0, 0.4, 0.7, 0.4],
        "Cycle-A2": [1.0, 0.5, 0.5, 1.0, 0.5, 0.5],
        "Cycle-A3": [1.0, 0.3, 0.6, 0.3, 0.8, 0.3, 0.6],
    },
    GENRE_B: {
        "Cycle-B1": [1.0, 0.0, 0.3, 0.0, 0.6, 0.0, 0.3, 0.0, 0.6, 0.0],
        "Cycle-B2": [1.0, 0.0, 0.0, 0.5, 0.0, 0.0, 0.7, 0.0],
        "Cycle-B3": [1.0, 0.0, 0.4, 0.0, 0.0, 0.7, 0.0, 0.0, 0.4, 0.0, 0.0, 0.5],
    },
}

INSTRUMENTS = {
    GENRE_A: ["Drone Lute", "Bowed String", "Reed Pipe", "Hand Drum", "Voice"],
    GENRE_B: ["Long Lute", "Rim Flute", "Frame Drum", "Spike Fiddle", "Choir"],
}


@dataclass
class ClipRecord:
    id: str
    source_group: str
    genre: str
    melodic_mode: str
    rhythm_cycle: str
    instruments: list
    waveform: np.ndarray
    sample_rate: int = SAMPLE_RATE
    duration_s: float = CLIP_SAMPLES / SAMPLE_RATE
    template_index: int = 0


@dataclass
class PromptRecord:
    clip_id: str
    template_index: int
    text: str


@dataclass
class SynthTrace:
    """Generator-side ground truth used by the pitch-tracking oracle."""

    f0: np.ndarray  # per-sample fundamental of the melody line, Hz
    glide_events: list  # (start_s, dur_s, span_cents)
    modulation_s: float | None  # mid-clip mode switch, GenreB only


def _cents_to_ratio(cents):
    return 2.0 ** (np.asarray(cents, dtype=np.float64) / 1200.0)


def _scale_freqs(tonic_hz, cents):
    base = tonic_hz * _cents_to_ratio(cents)
    return np.concatenate([base, base * 2.0])  # two octaves


def _harmonic_tone(phase, amps):
    out = np.zeros_like(phase)
    for h, a in enumerate(amps, start=1):
        out += a * np.sin(h * phase)
    return out


def _percussion(n, rng, cycle, beat_samples, amp=0.22):
    out = np.zeros(n)
    decay = np.exp(-np.arange(beat_samples) / (0.02 * SAMPLE_RATE))
    thump = np.sin(2 * np.pi * 70.0 * np.arange(beat_samples) / SAMPLE_RATE)
    noise = rng.normal((beat_samples,)) * 0.4
    hit = (thump + noise) * decay
    pos = 0
    beat = 0
    while pos + beat_samples <= n:
        a = cycle[beat % len(cycle)]
        if a > 0:
            out[pos:pos + beat_samples] += amp * a * hit
        pos += beat_samples
        beat += 1
    return out


def _drone(n, tonic_hz, amp):
    t = np.arange(n) / SAMPLE_RATE
    lfo = 1.0 + 0.08 * np.sin(2 * np.pi * 0.5 * t)
    return amp * lfo * (np.sin(2 * np.pi * tonic_hz * t)
                        + 0.5 * np.sin(2 * np.pi * 1.5 * tonic_hz * t)
                        + 0.25 * np.sin(2 * np.pi * 2.0 * tonic_hz * t))


_TIMBRES = {
    "Bowed String": [1.0, 0.55, 0.30, 0.18, 0.10],
    "Reed Pipe": [1.0, 0.20, 0.55, 0.12, 0.30],
    "Voice": [1.0, 0.45, 0.20, 0.08],
    "Long Lute": [1.0, 0.35, 0.50, 0.25, 0.12, 0.08],
    "Rim Flute": [1.0, 0.12, 0.08],
    "Spike Fiddle": [1.0, 0.60, 0.35, 0.22, 0.14],
    "Choir": [1.0, 0.30, 0.15, 0.10],
}
_DEFAULT_TIMBRE = [1.0, 0.4, 0.2]


def _lead_timbre(instruments):
    for name in instruments:
        if name in _TIMBRES:
            return _TIMBRES[name]
    return _DEFAULT_TIMBRE


def _render_genre_a(rng, scale_cents, cycle, instruments):
    n = CLIP_SAMPLES
    tonic = 210.0 + 20.0 * rng.child("tonic").uniform()
    freqs = _scale_freqs(tonic, scale_cents)
    nrng = rng.child("notes")
    orng = rng.child("ornaments")

    f0 = np.zeros(n)
    events = []
    pos = 0
    degree = nrng.integers(len(freqs))
    while pos < n:
        note_len = int((0.09 + 0.08 * nrng.uniform()) * SAMPLE_RATE)
        note_len = min(note_len, n - pos)
        step = int(nrng.integers(5)) - 2  # -2..2 random walk
        degree = int(np.clip(degree + step, 0, len(freqs) - 1))
        base = freqs[degree]
        seg = np.full(note_len, base)
        # one or two pitch-glide ornaments per note, 30-80 cents over 40-120 ms
        for _ in range(1 + int(orng.uniform() < 0.5)):
            span = 30.0 + 50.0 * orng.uniform()
            dur = int((0.04 + 0.08 * orng.uniform()) * SAMPLE_RATE)
            start = int(orng.uniform() * max(1, note_len - dur))
            dur = min(dur, note_len - start)
            if dur < 8:
                continue
            direction = 1.0 if orng.uniform() < 0.5 else -1.0
            ramp = np.sin(np.linspace(0, np.pi, dur))  # up and back
            seg[start:start + dur] *= 2.0 ** (direction * span * ramp / 1200.0)
            events.append((pos / SAMPLE_RATE + start / SAMPLE_RATE,
                           dur / SAMPLE_RATE, span))
        f0[pos:pos + note_len] = seg
        pos += note_len

    phase = np.cumsum(2 * np.pi * f0 / SAMPLE_RATE)
    env = 0.55 + 0.45 * np.abs(np.sin(np.pi * np.arange(n) / (0.13 * SAMPLE_RATE)))
    melody = 0.5 * env * _harmonic_tone(phase, _lead_timbre(instruments))

    wave = melody
    if any("Lute" in s or "Drone" in s for s in instruments):
        wave = wave + _drone(n, tonic, amp=0.16)
    if any("Drum" in s for s in instruments):
        beat = int(0.125 * SAMPLE_RATE)
        wave = wave + _percussion(n, rng.child("perc"), cycle, beat)
    return wave, SynthTrace(f0=f0, glide_events=events, modulation_s=None)


def _render_genre_b(rng, mode_name, scale_cents, cycle, instruments):
    n = CLIP_SAMPLES
    tonic = 130.0 + 15.0 * rng.child("tonic").uniform()
    # one mid-clip modulation to a sibling mode (long-range structure)
    others = [m for m in sorted(MODES[GENRE_B]) if m != mode_name]
    second = others[rng.child("second").integers(len(others))]
    freqs1 = _scale_freqs(tonic, scale_cents)
    freqs2 = _scale_freqs(tonic, MODES[GENRE_B][second])
    nrng = rng.child("notes")

    f0 = np.zeros(n)
    half = n // 2
    pos = 0
    degree = 2
    while pos < n:
        note_len = int((0.35 + 0.30 * nrng.uniform()) * SAMPLE_RATE)
        note_len = min(note_len, n - pos)
        degree = int(np.clip(degree + int(nrng.integers(3)) - 1, 0, len(freqs1) - 1))
        freqs = freqs1 if pos < half else freqs2
        f0[pos:pos + note_len] = freqs[degree]
        pos += note_len
    t = np.arange(n) / SAMPLE_RATE
    vibrato = 2.0 ** (8.0 * np.sin(2 * np.pi * 4.5 * t) / 1200.0)  # < 20 cents
    phase = np.cumsum(2 * np.pi * f0 * vibrato / SAMPLE_RATE)
    env = 0.8 + 0.2 * np.sin(2 * np.pi * 0.7 * t)
    melody = 0.5 * env * _harmonic_tone(phase, _lead_timbre(instruments))

    wave = melody
    if any("Lute" in s for s in instruments):
        wave = wave + _drone(n, tonic, amp=0.10)
    if any("Drum" in s for s in instruments):
        beat = int(0.25 * SAMPLE_RATE)
        wave = wave + _percussion(n, rng.child("perc"), cycle, beat, amp=0.15)
    return wave, SynthTrace(f0=f0, glide_events=[], modulation_s=half / SAMPLE_RATE)


def synthesize(genre, mode, cycle, instruments, seed):
    """Render a clip waveform plus its synthesis trace (f0 track, events)."""
    if mode not in MODES[genre]:
        raise VocabularyError(f"unknown mode {mode!r} for {genre}")
    if cycle not in CYCLES[genre]:
        raise VocabularyError(f"unknown cycle {cycle!r} for {genre}")
    rng = RngState(seed)
    if genre == GENRE_A:
        wave, trace = _render_genre_a(rng, MODES[genre][mode],
                                      CYCLES[genre][cycle], instruments)
    else:
        wave, trace = _render_genre_b(rng, mode, MODES[genre][mode],
                                      CYCLES[genre][cycle], instruments)
    peak = np.abs(wave).max()
    if peak == 0.0:
        raise DataError("silent render")
    return wave * (PEAK / peak), trace


def generate_clip(genre, mode, cycle, instruments, seed,
                  clip_id="", source_group="") -> ClipRecord:
    if genre not in GENRES:
        raise VocabularyError(f"unknown genre {genre!r}")
    wave, _ = synthesize(genre, mode, cycle, instruments, seed)
    return ClipRecord(id=clip_id or f"{_SHORT[genre]}-{seed}",
                      source_group=source_group or f"{_SHORT[genre]}-g{seed}",
                      genre=genre, melodic_mode=mode, rhythm_cycle=cycle,
                      instruments=list(instruments), waveform=wave)


def make_corpus(seed, groups_per_genre=50, clips_per_group=10):
    """Deterministic corpus: each source group is one synthetic 'song'.

    Clips in a group share mode, cycle and instruments (song-level metadata)
    but have distinct renders. Returns (clips, prompts).
    """
    clips, prompts = [], []
    root = RngState(seed)
    for genre in GENRES:
        short = _SHORT[genre]
        modes = sorted(MODES[genre])
        cycles = sorted(CYCLES[genre])
        pool = INSTRUMENTS[genre]
        for g in range(groups_per_genre):
            grng = root.child(f"{genre}/group{g}")
            group_id = f"{short}-g{g:03d}"
            mode = modes[grng.integers(len(modes))]
            cycle = cycles[grng.integers(len(cycles))]
            n_inst = 2 + grng.integers(3)
            instruments = [pool[i] for i in
                           sorted(set(int(grng.integers(len(pool)))
                                      for _ in range(8)))][:n_inst]
            if not instruments:
                instruments = [pool[0]]
            for c in range(clips_per_group):
                clip_seed = int(_mix64(_hash_tag(f"{seed}/{genre}/{g}/{c}")))
                clip = generate_clip(genre, mode, cycle, instruments, clip_seed,
                                     clip_id=f"{short}-g{g:03d}-c{c:02d}",
                                     source_group=group_id)
                clip.template_index = int(grng.child(f"tmpl{c}").integers(5))
                clips.append(clip)
                prompts.append(render_prompt(clip, clip.template_index))
    return clips, prompts


# ---------------------------------------------------------------------------
# prompt templates

_TEMPLATES = [
    "{genre} music with {instruments} in {mode} mode set to {cycle} rhythm.",
    "A {genre} performance on {instruments}, built around the {mode} mode and the {cycle} cycle.",
    "Recording of {genre}: {instruments} playing in {mode} over the {cycle} pattern.",
    "{mode} mode {genre} piece for {instruments}, keeping {cycle} time.",
    "Traditional {genre} rendition in {mode}, {cycle} rhythm, featuring {instruments}.",
]

_PATTERNS = [
    r"^(?P<genre>\S+) music with (?P<instruments>.+) in (?P<mode>\S+) mode set to (?P<cycle>\S+) rhythm\.$",
    r"^A (?P<genre>\S+) performance on (?P<instruments>.+), built around the (?P<mode>\S+) mode and the (?P<cycle>\S+) cycle\.$",
    r"^Recording of (?P<genre>\S+): (?P<instruments>.+) playing in (?P<mode>\S+) over the (?P<cycle>\S+) pattern\.$",
    r"^(?P<mode>\S+) mode (?P<genre>\S+) piece for (?P<instruments>.+), keeping (?P<cycle>\S+) time\.$",
    r"^Traditional (?P<genre>\S+) rendition in (?P<mode>\S+), (?P<cycle>\S+) rhythm, featuring (?P<instruments>.+)\.$",
]


def render_prompt(clip: ClipRecord, template_index: int,
                  rng: RngState | None = None) -> PromptRecord:
    """Fill one of the five fixed templates; rng picks one when index is None."""
    if template_index is None:
        template_index = int(rng.integers(5))
    if not 0 <= template_index <= 4:
        raise VocabularyError(f"template_index must be 0..4, got {template_index}")
    text = _TEMPLATES[template_index].format(
        genre=_SHORT[clip.genre], instruments=", ".join(clip.instruments),
        mode=clip.melodic_mode, cycle=clip.rhythm_cycle)
    return PromptRecord(clip_id=clip.id, template_index=template_index, text=text)


def parse_prompt(text: str) -> dict:
    """Invert a rendered prompt back to its metadata fields."""
    for idx, pat in enumerate(_PATTERNS):
        m = re.match(pat, text)
        if m:
            return {"template_index": idx, "genre": m.group("genre"),
                    "mode": m.group("mode"), "cycle": m.group("cycle"),
                    "instruments": m.group("instruments").split(", ")}
    raise VocabularyError(f"prompt does not match any template: {text!r}")


COND_DIM = 32


def embed_prompt(text: str, cond_dim: int = COND_DIM) -> np.ndarray:
    """Deterministic hashed bag-of-tokens, sign-hashed, L2-normalized."""
    tokens = [t for t in re.split(r"[^0-9a-z]+", text.lower()) if t]
    if not tokens:
        raise DataError("cannot embed empty text")
    v = np.zeros(cond_dim)
    for tok in tokens:
        h = int(_hash_tag("prompt/" + tok))
        sign = 1.0 if (h >> 8) & 1 else -1.0
        v[h % cond_dim] += sign
    norm = np.linalg.norm(v)
    if norm == 0.0:  # guard against pathological full cancellation
        v[0] = 1.0
        norm = 1.0
    return v / norm


# ---------------------------------------------------------------------------
# latent codec (diffusion backbone) and tokenizer (autoregressive backbone)

LATENT_SHAPE = (8, 16, 32)
LATENT_WINDOW = int(np.prod(LATENT_SHAPE))  # 4096 samples, lossless framing
_LATENT_FRAME = LATENT_SHAPE[0]


def _codec_matrix() -> np.ndarray:
    rng = RngState(int(_hash_tag("latent-codec-v1")))
    q, _ = np.linalg.qr(rng.normal((_LATENT_FRAME, _LATENT_FRAME)))
    return q


_CODEC_Q = _codec_matrix()


def encode_latent(waveform: np.ndarray) -> np.ndarray:
    """Orthonormal framing of a 4096-sample window into the [8,16,32] latent."""
    w = np.asarray(waveform, dtype=np.float64)
    if w.shape != (LATENT_WINDOW,):
        raise FramingError(f"latent codec needs {LATENT_WINDOW} samples, got {w.shape}")
    frames = w.reshape(-1, _LATENT_FRAME)  # [512, 8]
    coeffs = frames @ _CODEC_Q.T  # orthonormal analysis
    return np.ascontiguousarray(coeffs.T.reshape(LATENT_SHAPE))


def decode_latent(latent: np.ndarray) -> np.ndarray:
    lat = np.asarray(latent, dtype=np.float64)
    if lat.shape != LATENT_SHAPE:
        raise FramingError(f"latent shape must be {LATENT_SHAPE}, got {lat.shape}")
    coeffs = lat.reshape(_LATENT_FRAME, -1).T  # [512, 8]
    return np.ascontiguousarray((coeffs @ _CODEC_Q).ravel())


VOCAB_SIZE = 64
TOKEN_FRAME = 2
_TOKEN_RANGE = 1.4  # covers the Haar lowpass of two full-scale samples
_HAAR = np.sqrt(0.5)


def tokenize(waveform: np.ndarray) -> np.ndarray:
    """Frame pairs -> Haar lowpass coefficient -> uniform 64-bin quantization."""
    w = np.asarray(waveform, dtype=np.float64)
    if w.size % TOKEN_FRAME:
        w = np.concatenate([w, np.zeros(TOKEN_FRAME - w.size % TOKEN_FRAME)])
    proj = w.reshape(-1, TOKEN_FRAME).sum(axis=1) * _HAAR
    bins = np.floor((proj + _TOKEN_RANGE) / (2 * _TOKEN_RANGE) * VOCAB_SIZE)
    return np.clip(bins, 0, VOCAB_SIZE - 1).astype(np.int64)


def detokenize(tokens: np.ndarray) -> np.ndarray:
    """Reconstruct bin centers; the highpass half-band is irrecoverable."""
    tok = np.asarray(tokens, dtype=np.int64)
    centers = -_TOKEN_RANGE + (tok + 0.5) * (2 * _TOKEN_RANGE / VOCAB_SIZE)
    return np.repeat(centers * _HAAR, TOKEN_FRAME)


def silence_token() -> int:
    """Token id of a zero-amplitude frame; the generation primer."""
    return int(tokenize(np.zeros(TOKEN_FRAME))[0])


# ---------------------------------------------------------------------------
# dataset directory IO: manifest.tsv + prompts.tsv + raw float32 waveforms


def save_dataset(clips, prompts, out_dir):
    from pathlib import Path

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "manifest.tsv", "w", encoding="utf-8") as f:
        f.write("id\tgroup\tgenre\tmode\tcycle\tinstruments\ttemplate_index\n")
        for c in clips:
            f.write(f"{c.id}\t{c.source_group}\t{c.genre}\t{c.melodic_mode}\t"
                    f"{c.rhythm_cycle}\t{'|'.join(c.instruments)}\t{c.template_index}\n")
            (out / f"{c.id}.f32").write_bytes(
                c.waveform.astype("<f4").tobytes())
    with open(out / "prompts.tsv", "w", encoding="utf-8") as f:
        f.write("clip_id\ttemplate_index\ttext\n")
        for p in prompts:
            f.write(f"{p.clip_id}\t{p.template_index}\t{p.text}\n")


def load_dataset(in_dir):
    from pathlib import Path

    src = Path(in_dir)
    manifest = src / "manifest.tsv"
    if not manifest.exists():
        raise DataError(f"no manifest.tsv under {in_dir}")
    clips = []
    with open(manifest, encoding="utf-8") as f:
        f.readline()  # header
        for line in f:
            cid, group, genre, mode, cycle, instruments, tmpl = \
                line.rstrip("\n").split("\t")
            wave = np.frombuffer((src / f"{cid}.f32").read_bytes(),
                                 dtype="<f4").astype(np.float64)
            clips.append(ClipRecord(
                id=cid, source_group=group, genre=genre, melodic_mode=mode,
                rhythm_cycle=cycle, instruments=instruments.split("|"),
                waveform=wave, template_index=int(tmpl)))
    prompts = []
    ppath = src / "prompts.tsv"
    if ppath.exists():
        with open(ppath, encoding="utf-8") as f:
            f.readline()
            for line in f:
                cid, tmpl, text = line.rstrip("\n").split("\t", 2)
                prompts.append(PromptRecord(clip_id=cid,
                                            template_index=int(tmpl), text=text))
    return clips, prompts
