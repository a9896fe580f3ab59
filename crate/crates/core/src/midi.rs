//! Standard MIDI File ingestion.
//!
//! Parses format 0/1 SMF byte streams into a tempo-resolved list of
//! [`NoteEvent`]s and maps notes onto video frame intervals. A minimal
//! format-0 writer is provided so parsed performances can be re-serialized
//! (used by the trimmed-MIDI export and by the round-trip tests).

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tempo assumed when a file declares none (120 bpm).
pub const DEFAULT_TEMPO_US: u32 = 500_000;

/// Lowest and highest MIDI pitch that has a key on an 88-key piano.
pub const PIANO_PITCH_RANGE: std::ops::RangeInclusive<u8> = 21..=108;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MidiError {
    #[error("malformed MIDI at byte {offset}: {reason}")]
    Parse { offset: usize, reason: String },
    #[error("unsupported MIDI format: {0}")]
    UnsupportedFormat(String),
}

fn parse_err(offset: usize, reason: impl Into<String>) -> MidiError {
    MidiError::Parse {
        offset,
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoteEvent {
    pub index: usize,
    pub pitch: u8,
    pub velocity: u8,
    pub onset_s: f64,
    pub offset_s: f64,
    pub channel: u8,
}

impl NoteEvent {
    /// Whether an 88-key keyboard has a key for this pitch.
    pub fn is_mappable(&self) -> bool {
        PIANO_PITCH_RANGE.contains(&self.pitch)
    }

    pub fn duration_s(&self) -> f64 {
        self.offset_s - self.onset_s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TempoChange {
    pub tick: u64,
    pub us_per_quarter: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MidiPerformance {
    pub notes: Vec<NoteEvent>,
    pub ppq: u16,
    pub tempo_map: Vec<TempoChange>,
    pub duration_s: f64,
}

impl MidiPerformance {
    pub fn tick_to_seconds(&self, tick: u64) -> f64 {
        ticks_to_seconds(&self.tempo_map, self.ppq, tick)
    }

    /// Inverse of [`Self::tick_to_seconds`], rounded to the nearest tick.
    pub fn seconds_to_tick(&self, seconds: f64) -> u64 {
        seconds_to_ticks(&self.tempo_map, self.ppq, seconds)
    }
}

/// Piecewise integration of the tempo map up to `tick`.
fn ticks_to_seconds(tempo_map: &[TempoChange], ppq: u16, tick: u64) -> f64 {
    let ppq = f64::from(ppq);
    let mut seconds = 0.0;
    for (i, seg) in tempo_map.iter().enumerate() {
        if seg.tick >= tick {
            break;
        }
        let seg_end = tempo_map
            .get(i + 1)
            .map_or(tick, |next| next.tick.min(tick));
        seconds += (seg_end - seg.tick) as f64 * f64::from(seg.us_per_quarter) / (ppq * 1e6);
    }
    seconds
}

fn seconds_to_ticks(tempo_map: &[TempoChange], ppq: u16, seconds: f64) -> u64 {
    if seconds <= 0.0 {
        return 0;
    }
    let ppq_f = f64::from(ppq);
    let mut elapsed = 0.0;
    for (i, seg) in tempo_map.iter().enumerate() {
        let sec_per_tick = f64::from(seg.us_per_quarter) / (ppq_f * 1e6);
        match tempo_map.get(i + 1) {
            Some(next) => {
                let seg_len = (next.tick - seg.tick) as f64 * sec_per_tick;
                if seconds < elapsed + seg_len {
                    return seg.tick + ((seconds - elapsed) / sec_per_tick).round() as u64;
                }
                elapsed += seg_len;
            }
            None => return seg.tick + ((seconds - elapsed) / sec_per_tick).round() as u64,
        }
    }
    0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameInterval {
    pub first_frame: u64,
    pub frame_count: u64,
    pub fps: f64,
}

impl FrameInterval {
    pub fn is_empty(&self) -> bool {
        self.frame_count == 0
    }

    pub fn frames(&self) -> std::ops::Range<u64> {
        self.first_frame..self.first_frame + self.frame_count
    }

    pub fn contains(&self, frame: u64) -> bool {
        self.frames().contains(&frame)
    }
}

/// Frames `f >= 0` whose start time `f / fps` lies in
/// `[onset + video_offset, offset + video_offset)`.
///
/// # Panics
/// If `fps` is not strictly positive and finite.
pub fn note_frame_interval(note: &NoteEvent, fps: f64, video_offset_s: f64) -> FrameInterval {
    assert!(fps.is_finite() && fps > 0.0, "fps must be positive, got {fps}");
    let start = note.onset_s + video_offset_s;
    let end = note.offset_s + video_offset_s;
    let in_interval = |f: i64| {
        let t = f as f64 / fps;
        start <= t && t < end
    };
    let empty = FrameInterval {
        first_frame: 0,
        frame_count: 0,
        fps,
    };
    if !(end > start) || end <= 0.0 {
        return empty;
    }

    // ceil() gives the candidate bounds; the loops settle float rounding
    // against the exact predicate.
    let mut first = (start * fps).ceil().max(0.0) as i64;
    while first > 0 && (first - 1) as f64 / fps >= start {
        first -= 1;
    }
    while (first as f64 / fps) < start {
        first += 1;
    }
    let mut past = (end * fps).ceil().max(0.0) as i64;
    while past > first && (past - 1) as f64 / fps >= end {
        past -= 1;
    }
    while (past as f64 / fps) < end {
        past += 1;
    }
    if past <= first || !in_interval(first) {
        return FrameInterval { first_frame: first.max(0) as u64, ..empty };
    }
    FrameInterval {
        first_frame: first as u64,
        frame_count: (past - first) as u64,
        fps,
    }
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(data: &'a [u8]) -> Self {
        Self { data, pos: 0 }
    }

    fn remaining(&self) -> usize {
        self.data.len() - self.pos
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], MidiError> {
        if self.remaining() < n {
            return Err(parse_err(
                self.pos,
                format!("unexpected end of data reading {what}"),
            ));
        }
        let out = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self, what: &str) -> Result<u8, MidiError> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16, MidiError> {
        let b = self.take(2, what)?;
        Ok(u16::from_be_bytes([b[0], b[1]]))
    }

    fn u32(&mut self, what: &str) -> Result<u32, MidiError> {
        let b = self.take(4, what)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn vlq(&mut self) -> Result<u32, MidiError> {
        let start = self.pos;
        let mut value: u32 = 0;
        for _ in 0..4 {
            let b = self.u8("variable-length quantity")?;
            value = (value << 7) | u32::from(b & 0x7F);
            if b & 0x80 == 0 {
                return Ok(value);
            }
        }
        Err(parse_err(start, "variable-length quantity longer than 4 bytes"))
    }
}

#[derive(Debug, Clone, Copy)]
enum RawKind {
    NoteOn { channel: u8, pitch: u8, velocity: u8 },
    NoteOff { channel: u8, pitch: u8 },
    Tempo(u32),
}

#[derive(Debug, Clone, Copy)]
struct RawEvent {
    tick: u64,
    kind: RawKind,
}

struct RawTrack {
    events: Vec<RawEvent>,
    end_tick: u64,
}

fn parse_track(data: &[u8], base: usize) -> Result<RawTrack, MidiError> {
    let mut r = Reader::new(data);
    let mut tick: u64 = 0;
    let mut running: Option<u8> = None;
    let mut events = Vec::new();
    let offset = |r: &Reader<'_>| base + r.pos;

    while r.remaining() > 0 {
        tick += u64::from(r.vlq().map_err(|e| rebase(e, base))?);
        let status_pos = offset(&r);
        let first = r.u8("event status").map_err(|e| rebase(e, base))?;
        let (status, first_data) = if first & 0x80 != 0 {
            (first, None)
        } else {
            match running {
                Some(s) => (s, Some(first)),
                None => return Err(parse_err(status_pos, "data byte without running status")),
            }
        };

        match status {
            0xFF => {
                let meta_type = r.u8("meta type").map_err(|e| rebase(e, base))?;
                let len = r.vlq().map_err(|e| rebase(e, base))? as usize;
                let body = r.take(len, "meta event body").map_err(|e| rebase(e, base))?;
                match meta_type {
                    0x51 => {
                        if len != 3 {
                            return Err(parse_err(status_pos, "tempo meta event must be 3 bytes"));
                        }
                        let us = u32::from_be_bytes([0, body[0], body[1], body[2]]);
                        if us == 0 {
                            return Err(parse_err(status_pos, "tempo of 0 µs per quarter"));
                        }
                        events.push(RawEvent {
                            tick,
                            kind: RawKind::Tempo(us),
                        });
                    }
                    0x2F => return Ok(RawTrack { events, end_tick: tick }),
                    _ => {}
                }
            }
            0xF0 | 0xF7 => {
                let len = r.vlq().map_err(|e| rebase(e, base))? as usize;
                r.take(len, "sysex body").map_err(|e| rebase(e, base))?;
            }
            0x80..=0xEF => {
                running = Some(status);
                let data_len = match status & 0xF0 {
                    0xC0 | 0xD0 => 1,
                    _ => 2,
                };
                let mut bytes = [0u8; 2];
                let mut filled = 0;
                if let Some(b) = first_data {
                    bytes[0] = b;
                    filled = 1;
                }
                while filled < data_len {
                    bytes[filled] = r.u8("channel event data").map_err(|e| rebase(e, base))?;
                    filled += 1;
                }
                if bytes[..data_len].iter().any(|b| b & 0x80 != 0) {
                    return Err(parse_err(status_pos, "channel event data byte has high bit set"));
                }
                let channel = status & 0x0F;
                match status & 0xF0 {
                    0x90 if bytes[1] > 0 => events.push(RawEvent {
                        tick,
                        kind: RawKind::NoteOn {
                            channel,
                            pitch: bytes[0],
                            velocity: bytes[1],
                        },
                    }),
                    0x80 | 0x90 => events.push(RawEvent {
                        tick,
                        kind: RawKind::NoteOff {
                            channel,
                            pitch: bytes[0],
                        },
                    }),
                    _ => {}
                }
            }
            other => {
                return Err(parse_err(
                    status_pos,
                    format!("unexpected status byte 0x{other:02X}"),
                ))
            }
        }
    }
    // Missing end-of-track: close everything at the last event.
    Ok(RawTrack {
        events,
        end_tick: tick,
    })
}

fn rebase(err: MidiError, base: usize) -> MidiError {
    match err {
        MidiError::Parse { offset, reason } => MidiError::Parse {
            offset: offset + base,
            reason,
        },
        other => other,
    }
}

/// Note on/off pairs in ticks, before tempo resolution.
struct TickNote {
    on: u64,
    off: u64,
    pitch: u8,
    velocity: u8,
    channel: u8,
}

fn pair_notes(track: &RawTrack, out: &mut Vec<TickNote>) {
    let mut open: [[Option<(u64, u8)>; 128]; 16] = [[None; 128]; 16];
    for ev in &track.events {
        match ev.kind {
            RawKind::NoteOn {
                channel,
                pitch,
                velocity,
            } => {
                let slot = &mut open[channel as usize][pitch as usize];
                // Re-striking a sounding key closes the earlier note.
                if let Some((on, vel)) = slot.take() {
                    out.push(TickNote {
                        on,
                        off: ev.tick,
                        pitch,
                        velocity: vel,
                        channel,
                    });
                }
                *slot = Some((ev.tick, velocity));
            }
            RawKind::NoteOff { channel, pitch } => {
                if let Some((on, vel)) = open[channel as usize][pitch as usize].take() {
                    out.push(TickNote {
                        on,
                        off: ev.tick,
                        pitch,
                        velocity: vel,
                        channel,
                    });
                }
            }
            RawKind::Tempo(_) => {}
        }
    }
    for (channel, pitches) in open.iter().enumerate() {
        for (pitch, slot) in pitches.iter().enumerate() {
            if let Some((on, vel)) = slot {
                out.push(TickNote {
                    on: *on,
                    off: track.end_tick.max(*on),
                    pitch: pitch as u8,
                    velocity: *vel,
                    channel: channel as u8,
                });
            }
        }
    }
}

/// Parse a format 0 or 1 Standard MIDI File.
pub fn parse_midi(bytes: &[u8]) -> Result<MidiPerformance, MidiError> {
    let mut r = Reader::new(bytes);
    let magic = r.take(4, "header chunk id")?;
    if magic != b"MThd" {
        return Err(parse_err(0, "missing MThd header chunk"));
    }
    let header_len = r.u32("header length")? as usize;
    if header_len < 6 {
        return Err(parse_err(4, format!("header length {header_len} is shorter than 6")));
    }
    let header_start = r.pos;
    let format = r.u16("format")?;
    let ntracks = r.u16("track count")?;
    let division = r.u16("division")?;
    r.take(header_len - 6, "header padding")
        .map_err(|_| parse_err(header_start, "header chunk length exceeds data"))?;

    match format {
        0 | 1 => {}
        2 => return Err(MidiError::UnsupportedFormat("format 2 (asynchronous tracks)".into())),
        other => return Err(parse_err(header_start, format!("unknown SMF format {other}"))),
    }
    if division & 0x8000 != 0 {
        return Err(MidiError::UnsupportedFormat("SMPTE time division".into()));
    }
    if division == 0 {
        return Err(parse_err(header_start + 4, "ticks per quarter note is 0"));
    }

    let mut tracks = Vec::with_capacity(usize::from(ntracks));
    while r.remaining() > 0 && tracks.len() < usize::from(ntracks) {
        let chunk_pos = r.pos;
        let id = r.take(4, "chunk id")?;
        let len = r.u32("chunk length")? as usize;
        if r.remaining() < len {
            return Err(parse_err(
                chunk_pos,
                format!("chunk declares {len} bytes but only {} remain", r.remaining()),
            ));
        }
        let body_start = r.pos;
        let body = r.take(len, "chunk body")?;
        if id == b"MTrk" {
            tracks.push(parse_track(body, body_start)?);
        }
    }
    if tracks.len() < usize::from(ntracks) {
        return Err(parse_err(
            r.pos,
            format!("header declares {ntracks} tracks, found {}", tracks.len()),
        ));
    }

    let mut tempo_events: Vec<(u64, u32)> = tracks
        .iter()
        .flat_map(|t| t.events.iter())
        .filter_map(|e| match e.kind {
            RawKind::Tempo(us) => Some((e.tick, us)),
            _ => None,
        })
        .collect();
    tempo_events.sort_by_key(|&(tick, _)| tick);
    let mut tempo_map: Vec<TempoChange> = Vec::new();
    for (tick, us) in tempo_events {
        match tempo_map.last_mut() {
            Some(last) if last.tick == tick => last.us_per_quarter = us,
            _ => tempo_map.push(TempoChange {
                tick,
                us_per_quarter: us,
            }),
        }
    }
    if tempo_map.first().map_or(true, |t| t.tick != 0) {
        tempo_map.insert(
            0,
            TempoChange {
                tick: 0,
                us_per_quarter: DEFAULT_TEMPO_US,
            },
        );
    }

    let mut tick_notes = Vec::new();
    for track in &tracks {
        pair_notes(track, &mut tick_notes);
    }
    let end_tick = tracks.iter().map(|t| t.end_tick).max().unwrap_or(0);

    let mut notes: Vec<NoteEvent> = tick_notes
        .iter()
        .map(|n| NoteEvent {
            index: 0,
            pitch: n.pitch,
            velocity: n.velocity,
            onset_s: ticks_to_seconds(&tempo_map, division, n.on),
            offset_s: ticks_to_seconds(&tempo_map, division, n.off),
            channel: n.channel,
        })
        .collect();
    sort_and_index(&mut notes);

    let max_offset = notes.iter().map(|n| n.offset_s).fold(0.0, f64::max);
    let duration_s = ticks_to_seconds(&tempo_map, division, end_tick).max(max_offset);

    Ok(MidiPerformance {
        notes,
        ppq: division,
        tempo_map,
        duration_s,
    })
}

/// Sort by (onset, pitch) and assign dense indices.
pub(crate) fn sort_and_index(notes: &mut [NoteEvent]) {
    notes.sort_by(|a, b| {
        a.onset_s
            .total_cmp(&b.onset_s)
            .then(a.pitch.cmp(&b.pitch))
            .then(a.channel.cmp(&b.channel))
            .then(a.offset_s.total_cmp(&b.offset_s))
    });
    for (i, n) in notes.iter_mut().enumerate() {
        n.index = i;
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct WriteOptions {
    /// Omit repeated status bytes for consecutive channel events.
    pub running_status: bool,
}

fn push_vlq(out: &mut Vec<u8>, mut value: u32) {
    let mut buf = [0u8; 4];
    let mut n = 0;
    loop {
        buf[n] = (value & 0x7F) as u8;
        n += 1;
        value >>= 7;
        if value == 0 {
            break;
        }
    }
    for i in (0..n).rev() {
        out.push(if i > 0 { buf[i] | 0x80 } else { buf[i] });
    }
}

/// Serialize a performance as a single-track format-0 SMF.
///
/// Note times are converted back to ticks through the performance's own
/// tempo map, so a parsed file re-serializes to the same note list.
pub fn write_midi(perf: &MidiPerformance, opts: WriteOptions) -> Vec<u8> {
    // (tick, order, status, data1, data2); order puts note-offs before
    // note-ons at the same tick, except for zero-length notes.
    let mut events: Vec<(u64, u8, u8, u8, u8)> = Vec::new();
    for t in &perf.tempo_map {
        events.push((t.tick, 0, 0xFF, 0, 0));
    }
    for n in &perf.notes {
        let on = perf.seconds_to_tick(n.onset_s);
        let off = perf.seconds_to_tick(n.offset_s).max(on);
        let ch = n.channel & 0x0F;
        events.push((on, 2, 0x90 | ch, n.pitch & 0x7F, n.velocity.clamp(1, 127)));
        let order = if off == on { 3 } else { 1 };
        events.push((off, order, 0x80 | ch, n.pitch & 0x7F, 0));
    }
    events.sort_by_key(|e| (e.0, e.1));

    let mut track = Vec::new();
    let mut last_tick = 0u64;
    let mut running: Option<u8> = None;
    let mut tempo_iter = perf.tempo_map.iter();
    for (tick, _, status, d1, d2) in events {
        push_vlq(&mut track, (tick - last_tick) as u32);
        last_tick = tick;
        if status == 0xFF {
            let us = tempo_iter.next().map_or(DEFAULT_TEMPO_US, |t| t.us_per_quarter);
            track.extend_from_slice(&[0xFF, 0x51, 0x03]);
            track.extend_from_slice(&us.to_be_bytes()[1..]);
            running = None;
            continue;
        }
        if !(opts.running_status && running == Some(status)) {
            track.push(status);
        }
        running = Some(status);
        track.extend_from_slice(&[d1, d2]);
    }
    push_vlq(&mut track, 0);
    track.extend_from_slice(&[0xFF, 0x2F, 0x00]);

    let mut out = Vec::with_capacity(track.len() + 22);
    out.extend_from_slice(b"MThd");
    out.extend_from_slice(&6u32.to_be_bytes());
    out.extend_from_slice(&0u16.to_be_bytes());
    out.extend_from_slice(&1u16.to_be_bytes());
    out.extend_from_slice(&perf.ppq.to_be_bytes());
    out.extend_from_slice(b"MTrk");
    out.extend_from_slice(&(track.len() as u32).to_be_bytes());
    out.extend_from_slice(&track);
    out
}
