//! Fingerboard frame rendering.
//!
//! Each frame is a plain RGB raster: four horizontal strings (G at the top),
//! vertical position markers, small cyan dots for notes starting within the
//! look-ahead window, a large red dot for the sounding note and a title line.
//! No anti-aliasing is applied and text uses an embedded 8x8 bitmap font, so
//! the same inputs always produce the same bytes.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use thiserror::Error;

use crate::fingerboard::{
    position_label, FingerboardTable, Placement, ViolinString, SLOTS_PER_STRING,
};
use crate::score::{NoteEvent, ScoreTimeline};

/// Seconds of static fingerboard appended after the last note.
pub const TAIL_PAD: f64 = 1.0;
/// Look-ahead used when no tempo is known.
pub const FALLBACK_LOOKAHEAD: f64 = 2.0;

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("invalid render config: {0}")]
    Config(String),
    #[error("render time must be a non-negative number, got {0}")]
    Time(f64),
    #[error("png export failed: {0}")]
    Png(#[from] png::EncodingError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Rgb = [u8; 3];

#[derive(Debug, Clone, PartialEq)]
pub struct Palette {
    pub background: Rgb,
    /// G, D, A, E.
    pub strings: [Rgb; 4],
    pub markers: Rgb,
    pub upcoming: Rgb,
    pub active: Rgb,
    pub text: Rgb,
}

impl Default for Palette {
    fn default() -> Self {
        Palette {
            background: [250, 246, 238],
            strings: [[101, 67, 33], [128, 84, 46], [150, 103, 58], [176, 124, 74]],
            markers: [190, 190, 190],
            upcoming: [0, 200, 220],
            active: [220, 30, 30],
            text: [30, 30, 30],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Lookahead {
    /// Beats at the tempo in effect at the frame time.
    Beats(f64),
    Seconds(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderConfig {
    pub width: u32,
    pub height: u32,
    pub fps: u32,
    pub lookahead: Lookahead,
    pub palette: Palette,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig {
            width: 1280,
            height: 720,
            fps: 30,
            lookahead: Lookahead::Beats(2.0),
            palette: Palette::default(),
        }
    }
}

impl RenderConfig {
    pub fn validate(&self) -> Result<(), RenderError> {
        if !self.width.is_multiple_of(2) || !self.height.is_multiple_of(2) {
            return Err(RenderError::Config(format!(
                "dimensions must be even, got {}x{}",
                self.width, self.height
            )));
        }
        if self.width < 320 || self.height < 240 {
            return Err(RenderError::Config(format!(
                "dimensions must be at least 320x240, got {}x{}",
                self.width, self.height
            )));
        }
        if self.fps == 0 {
            return Err(RenderError::Config("fps must be at least 1".into()));
        }
        let la = match self.lookahead {
            Lookahead::Beats(b) => b,
            Lookahead::Seconds(s) => s,
        };
        if !(la.is_finite() && la >= 0.0) {
            return Err(RenderError::Config(format!(
                "lookahead must be >= 0, got {la}"
            )));
        }
        Ok(())
    }

    /// Look-ahead window in seconds at `time`.
    pub fn lookahead_seconds(&self, timeline: &ScoreTimeline, time: f64) -> f64 {
        match self.lookahead {
            Lookahead::Seconds(s) => s,
            Lookahead::Beats(beats) => match timeline.bpm_at(time) {
                Some(bpm) if bpm > 0.0 => beats * 60.0 / bpm,
                _ => FALLBACK_LOOKAHEAD,
            },
        }
    }
}

/// Pixel geometry derived from the frame size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub nut_x: i32,
    pub marker_spacing: i32,
    pub top_margin: i32,
    pub string_spacing: i32,
    pub label_x: i32,
    pub title_y: i32,
    pub marker_label_y: i32,
    pub text_scale: i32,
    pub active_radius: i32,
    pub upcoming_radius: i32,
}

impl Layout {
    pub fn new(width: u32, height: u32) -> Layout {
        let (w, h) = (width as i32, height as i32);
        let nut_x = w / 10;
        let right = w - w / 20;
        let string_spacing = h * 3 / 20;
        Layout {
            nut_x,
            marker_spacing: (right - nut_x) / (SLOTS_PER_STRING as i32 - 1),
            top_margin: h * 3 / 8,
            string_spacing,
            label_x: w / 40,
            title_y: h / 24,
            marker_label_y: h * 5 / 24,
            text_scale: (h / 240).max(1),
            active_radius: string_spacing * 2 / 5,
            upcoming_radius: string_spacing / 5,
        }
    }

    pub fn string_y(&self, s: ViolinString) -> i32 {
        self.top_margin + s.index() as i32 * self.string_spacing
    }

    pub fn offset_x(&self, offset: u8) -> i32 {
        self.nut_x + offset as i32 * self.marker_spacing
    }

    pub fn glyph_size(&self) -> i32 {
        8 * self.text_scale
    }
}

/// Centre of a placement's dot in pixels.
pub fn placement_to_xy(p: &Placement, cfg: &RenderConfig) -> (i32, i32) {
    let layout = Layout::new(cfg.width, cfg.height);
    (
        layout.offset_x(p.semitone_offset),
        layout.string_y(p.string),
    )
}

/// One RGB raster.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub index: u64,
    pub timestamp: f64,
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl Frame {
    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    /// Row-major packed RGB bytes.
    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixel(&self, x: u32, y: u32) -> Rgb {
        let i = ((y * self.width + x) * 3) as usize;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn write_png<W: Write>(&self, w: W) -> Result<(), RenderError> {
        let mut encoder = png::Encoder::new(w, self.width, self.height);
        encoder.set_color(png::ColorType::Rgb);
        encoder.set_depth(png::BitDepth::Eight);
        let mut writer = encoder.write_header()?;
        writer.write_image_data(&self.pixels)?;
        writer.finish()?;
        Ok(())
    }

    pub fn save_png(&self, path: &Path) -> Result<(), RenderError> {
        let file = BufWriter::new(File::create(path)?);
        self.write_png(file)
    }
}

struct Canvas<'a> {
    width: i32,
    height: i32,
    buf: &'a mut [u8],
}

impl Canvas<'_> {
    fn put(&mut self, x: i32, y: i32, c: Rgb) {
        if x >= 0 && y >= 0 && x < self.width && y < self.height {
            let i = ((y * self.width + x) * 3) as usize;
            self.buf[i..i + 3].copy_from_slice(&c);
        }
    }

    fn rect(&mut self, x0: i32, y0: i32, x1: i32, y1: i32, c: Rgb) {
        for y in y0.max(0)..y1.min(self.height) {
            for x in x0.max(0)..x1.min(self.width) {
                self.put(x, y, c);
            }
        }
    }

    fn disc(&mut self, cx: i32, cy: i32, r: i32, c: Rgb) {
        for dy in -r..=r {
            for dx in -r..=r {
                if dx * dx + dy * dy <= r * r {
                    self.put(cx + dx, cy + dy, c);
                }
            }
        }
    }

    fn text(&mut self, x: i32, y: i32, scale: i32, s: &str, c: Rgb) {
        for (i, ch) in s.chars().enumerate() {
            let glyph = font8x8::legacy::BASIC_LEGACY
                .get(ch as usize)
                .copied()
                .unwrap_or(font8x8::legacy::BASIC_LEGACY[b'?' as usize]);
            let gx = x + i as i32 * 8 * scale;
            for (row, bits) in glyph.iter().enumerate() {
                for col in 0..8 {
                    if bits & (1 << col) != 0 {
                        let px = gx + col * scale;
                        let py = y + row as i32 * scale;
                        self.rect(px, py, px + scale, py + scale, c);
                    }
                }
            }
        }
    }

    fn text_centered(&mut self, cx: i32, y: i32, scale: i32, s: &str, c: Rgb) {
        let w = s.chars().count() as i32 * 8 * scale;
        self.text(cx - w / 2, y, scale, s, c);
    }
}

/// Renders frames for one timeline. The static fingerboard is drawn once and
/// copied into every frame.
pub struct FrameRenderer<'a> {
    timeline: &'a ScoreTimeline,
    // in-range events with their placements, in timeline order
    notes: Vec<(&'a NoteEvent, Placement)>,
    cfg: RenderConfig,
    layout: Layout,
    background: Vec<u8>,
}

impl<'a> FrameRenderer<'a> {
    pub fn new(
        timeline: &'a ScoreTimeline,
        table: &FingerboardTable,
        cfg: &RenderConfig,
    ) -> Result<FrameRenderer<'a>, RenderError> {
        cfg.validate()?;
        let notes = timeline
            .events()
            .iter()
            .filter_map(|e| table.lookup(e.midi).placement().map(|p| (e, p)))
            .collect();
        let layout = Layout::new(cfg.width, cfg.height);
        let mut background = vec![0u8; (cfg.width * cfg.height * 3) as usize];
        draw_fingerboard(&mut background, cfg, &layout);
        Ok(FrameRenderer {
            timeline,
            notes,
            cfg: cfg.clone(),
            layout,
            background,
        })
    }

    pub fn config(&self) -> &RenderConfig {
        &self.cfg
    }

    /// `ceil((total_duration + TAIL_PAD) * fps)`.
    pub fn frame_count(&self) -> u64 {
        frame_count(self.timeline.total_duration(), self.cfg.fps)
    }

    /// The sounding note at `time`: latest start with `start <= time < end`.
    pub fn active_at(&self, time: f64) -> Option<(&'a NoteEvent, Placement)> {
        self.notes
            .iter()
            .filter(|(e, _)| e.start_time <= time && time < e.end_time())
            .max_by(|a, b| a.0.start_time.total_cmp(&b.0.start_time))
            .copied()
    }

    /// Notes starting in `(time, time + lookahead]`.
    pub fn upcoming_at(&self, time: f64) -> impl Iterator<Item = (&'a NoteEvent, Placement)> + '_ {
        let horizon = time + self.cfg.lookahead_seconds(self.timeline, time);
        self.notes
            .iter()
            .filter(move |(e, _)| e.start_time > time && e.start_time <= horizon)
            .copied()
    }

    pub fn render_index(&self, index: u64) -> Frame {
        self.render(index, index as f64 / self.cfg.fps as f64)
    }

    pub fn render_at(&self, time: f64) -> Result<Frame, RenderError> {
        if !(time.is_finite() && time >= 0.0) {
            return Err(RenderError::Time(time));
        }
        let index = (time * self.cfg.fps as f64).floor() as u64;
        Ok(self.render(index, time))
    }

    fn render(&self, index: u64, time: f64) -> Frame {
        let mut pixels = self.background.clone();
        let l = &self.layout;
        let pal = &self.cfg.palette;
        let mut canvas = Canvas {
            width: self.cfg.width as i32,
            height: self.cfg.height as i32,
            buf: &mut pixels,
        };

        for (_, p) in self.upcoming_at(time) {
            canvas.disc(
                l.offset_x(p.semitone_offset),
                l.string_y(p.string),
                l.upcoming_radius,
                pal.upcoming,
            );
        }

        let active = self.active_at(time);
        if let Some((event, p)) = active {
            let (x, y) = (l.offset_x(p.semitone_offset), l.string_y(p.string));
            canvas.disc(x, y, l.active_radius, pal.active);
            let label = format!("{} {}", event.note_name, p.position_label);
            let ty = y - l.active_radius - l.glyph_size() - l.text_scale * 2;
            canvas.text_centered(x, ty, l.text_scale, &label, pal.text);
        }

        let current = active.map_or("-", |(e, _)| e.note_name.as_str());
        let title = format!("Now: {current:<4} {}", format_clock(time));
        canvas.text(l.label_x, l.title_y, l.text_scale, &title, pal.text);

        Frame {
            index,
            timestamp: time,
            width: self.cfg.width,
            height: self.cfg.height,
            pixels,
        }
    }
}

fn format_clock(time: f64) -> String {
    let centis = (time * 100.0).floor() as u64;
    format!(
        "{}:{:02}.{:02}",
        centis / 6000,
        (centis / 100) % 60,
        centis % 100
    )
}

fn draw_fingerboard(buf: &mut [u8], cfg: &RenderConfig, l: &Layout) {
    let pal = &cfg.palette;
    let mut canvas = Canvas {
        width: cfg.width as i32,
        height: cfg.height as i32,
        buf,
    };
    canvas.rect(0, 0, canvas.width, canvas.height, pal.background);

    let top = l.string_y(ViolinString::G) - l.string_spacing / 2;
    let bottom = l.string_y(ViolinString::E) + l.string_spacing / 2;
    let thin = (l.text_scale / 2).max(1);
    for offset in 0..SLOTS_PER_STRING {
        let x = l.offset_x(offset);
        let half = if offset == 0 { thin * 3 } else { thin };
        canvas.rect(x - half, top, x + half, bottom, pal.markers);
        let label = match offset {
            0 => "0",
            _ => position_label(offset).unwrap_or(""),
        };
        canvas.text_centered(x, l.marker_label_y, l.text_scale, label, pal.text);
    }

    let right = l.offset_x(SLOTS_PER_STRING - 1) + l.marker_spacing / 2;
    for s in ViolinString::ALL {
        let y = l.string_y(s);
        // lower strings are drawn thicker
        let half = (4 - s.index() as i32).max(1) * thin;
        canvas.rect(l.nut_x, y - half, right, y + half, pal.strings[s.index()]);
        let gy = y - l.glyph_size() / 2;
        canvas.text(l.label_x, gy, l.text_scale, s.name(), pal.text);
    }
}

pub fn frame_count(total_duration: f64, fps: u32) -> u64 {
    // tolerate float noise such as 10.000000000001 * 30
    ((total_duration + TAIL_PAD) * fps as f64 - 1e-9)
        .ceil()
        .max(0.0) as u64
}

/// Renders a single frame at `time` seconds.
pub fn render_frame(
    timeline: &ScoreTimeline,
    table: &FingerboardTable,
    time: f64,
    cfg: &RenderConfig,
) -> Result<Frame, RenderError> {
    FrameRenderer::new(timeline, table, cfg)?.render_at(time)
}

/// Lazily renders every frame of the video in index order.
pub struct Frames<'a> {
    renderer: FrameRenderer<'a>,
    next: u64,
    count: u64,
}

impl Frames<'_> {
    pub fn config(&self) -> &RenderConfig {
        self.renderer.config()
    }
}

impl Iterator for Frames<'_> {
    type Item = Frame;

    fn next(&mut self) -> Option<Frame> {
        (self.next < self.count).then(|| {
            let frame = self.renderer.render_index(self.next);
            self.next += 1;
            frame
        })
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = (self.count - self.next) as usize;
        (left, Some(left))
    }
}

impl ExactSizeIterator for Frames<'_> {}

pub fn render_all<'a>(
    timeline: &'a ScoreTimeline,
    table: &FingerboardTable,
    cfg: &RenderConfig,
) -> Result<Frames<'a>, RenderError> {
    let renderer = FrameRenderer::new(timeline, table, cfg)?;
    let count = renderer.frame_count();
    Ok(Frames {
        renderer,
        next: 0,
        count,
    })
}
