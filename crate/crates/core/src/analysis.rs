//! First-layer weight histograms and their KL divergence from uniform.
//!
//! Every network in a report is binned over the same symmetric range
//! `[-a, a]`, `a` being the largest absolute weight among the compared
//! networks for that channel, so the divergences are comparable.

use std::fmt;

use crate::arch::{Network, Vertex};
use crate::error::{Error, Result};

pub const DEFAULT_BINS: usize = 50;
pub const DEFAULT_ALPHA: f64 = 1.0;

#[derive(Clone, Debug, PartialEq)]
pub struct Histogram {
    edges: Vec<f64>,
    counts: Vec<u64>,
    total: u64,
}

impl Histogram {
    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn range(&self) -> (f64, f64) {
        (self.edges[0], self.edges[self.edges.len() - 1])
    }
}

/// `bins` equal-width bins over `[lo, hi]`, left-closed except the last,
/// which also takes `hi`. Values outside the range are an error.
pub fn histogram(values: &[f64], bins: usize, range: (f64, f64)) -> Result<Histogram> {
    let (lo, hi) = range;
    if bins < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 bins, got {bins}")));
    }
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::InvalidArgument(format!("histogram range [{lo}, {hi}] is empty")));
    }
    if values.is_empty() {
        return Err(Error::InvalidArgument("cannot histogram an empty value list".into()));
    }
    let width = (hi - lo) / bins as f64;
    let mut edges: Vec<f64> = (0..=bins).map(|i| lo + i as f64 * width).collect();
    edges[bins] = hi;
    let mut counts = vec![0u64; bins];
    for &v in values {
        if !v.is_finite() || v < lo || v > hi {
            return Err(Error::InvalidArgument(format!("value {v} outside histogram range [{lo}, {hi}]")));
        }
        let mut i = (((v - lo) / width) as usize).min(bins - 1);
        // the division can land one bin off near an edge
        while i > 0 && v < edges[i] {
            i -= 1;
        }
        while i + 1 < bins && v >= edges[i + 1] {
            i += 1;
        }
        counts[i] += 1;
    }
    Ok(Histogram {
        edges,
        counts,
        total: values.len() as u64,
    })
}

/// `sum p_i ln(p_i / q_i)` with `p_i = (count_i + alpha) / (total + bins * alpha)`
/// and `q` uniform over `q_bins` bins.
pub fn kl_divergence(p: &Histogram, q_bins: usize, alpha: f64) -> Result<f64> {
    if p.bins() != q_bins {
        return Err(Error::BinAlignment(format!(
            "histogram has {} bins, reference has {q_bins}",
            p.bins()
        )));
    }
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::InvalidArgument(format!("smoothing must be positive, got {alpha}")));
    }
    let norm = p.total as f64 + q_bins as f64 * alpha;
    let q = 1.0 / q_bins as f64;
    let kl = p
        .counts
        .iter()
        .map(|&c| {
            let pi = (c as f64 + alpha) / norm;
            pi * (pi / q).ln()
        })
        .sum::<f64>();
    // rounding can leave a tiny negative sum for a uniform p
    Ok(kl.max(0.0))
}

/// Input channel selector for weight collection.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Channel {
    Index(usize),
    Pooled,
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Channel::Index(c) => write!(f, "{c}"),
            Channel::Pooled => f.write_str("pooled"),
        }
    }
}

fn color_channels(net: &Network) -> usize {
    net.spec().input_shape.0
}

fn stream_weights(net: &Network, stream: usize, channel: Channel) -> Vec<f64> {
    let colors = color_channels(net);
    let w = net.first_layer_weights()[stream];
    let s = w.shape();
    let taps = s.h * s.w;
    let mut out = Vec::new();
    for o in 0..s.n {
        for k in 0..s.c {
            // slice-packed inputs hold color k % colors
            if let Channel::Index(c) = channel {
                if k % colors != c {
                    continue;
                }
            }
            let start = (o * s.c + k) * taps;
            out.extend_from_slice(&w.data()[start..start + taps]);
        }
    }
    out
}

/// All first-layer weights reading color `channel`, gathered across streams.
pub fn collect_first_layer_weights(net: &Network, channel: usize) -> Result<Vec<f64>> {
    collect_weights(net, Channel::Index(channel))
}

pub fn collect_weights(net: &Network, channel: Channel) -> Result<Vec<f64>> {
    if let Channel::Index(c) = channel {
        if c >= color_channels(net) {
            return Err(Error::IndexOutOfRange {
                what: "input channel",
                index: c,
                len: color_channels(net),
            });
        }
    }
    Ok((0..net.streams.len()).flat_map(|s| stream_weights(net, s, channel)).collect())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AnalysisOptions {
    pub bins: usize,
    pub alpha: f64,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        AnalysisOptions {
            bins: DEFAULT_BINS,
            alpha: DEFAULT_ALPHA,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KlRow {
    pub tag: String,
    /// `None` for the whole network, `Some(i)` for stream `i` alone.
    pub stream: Option<usize>,
    pub channel: Channel,
    pub bins: usize,
    pub alpha: f64,
    pub weights: usize,
    pub kl: f64,
}

impl KlRow {
    /// Tag as written to CSV; per-stream rows get a `/s{i}` suffix.
    pub fn label(&self) -> String {
        match self.stream {
            None => self.tag.clone(),
            Some(i) => format!("{}/s{i}", self.tag),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KlReport {
    pub rows: Vec<KlRow>,
    /// Shared `(channel, lo, hi)` ranges used for every network.
    pub ranges: Vec<(Channel, f64, f64)>,
    pub bins: usize,
}

impl KlReport {
    pub const HEADER: &'static str = "tag,channel,bins,alpha,kl";

    pub fn to_csv(&self) -> String {
        let mut s = format!("{}\n", Self::HEADER);
        for r in &self.rows {
            s.push_str(&format!("{},{},{},{},{}\n", r.label(), r.channel, r.bins, r.alpha, r.kl));
        }
        s
    }

    /// Whole-network divergence for `tag` on `channel`.
    pub fn kl(&self, tag: &str, channel: Channel) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.tag == tag && r.stream.is_none() && r.channel == channel)
            .map(|r| r.kl)
    }

    pub fn range(&self, channel: Channel) -> Option<(f64, f64)> {
        self.ranges.iter().find(|r| r.0 == channel).map(|r| (r.1, r.2))
    }

    /// Tags ordered by decreasing divergence on `channel`.
    pub fn ordering(&self, channel: Channel) -> Vec<String> {
        let mut rows: Vec<&KlRow> = self
            .rows
            .iter()
            .filter(|r| r.stream.is_none() && r.channel == channel)
            .collect();
        rows.sort_by(|a, b| b.kl.total_cmp(&a.kl));
        rows.into_iter().map(|r| r.tag.clone()).collect()
    }
}

fn channels(colors: usize) -> Vec<Channel> {
    (0..colors).map(Channel::Index).chain([Channel::Pooled]).collect()
}

/// Per-channel and pooled divergences of every network, plus per-stream rows
/// for multi-stream networks. All networks must read the same number of colors.
pub fn diversity_report(nets: &[(String, &Network)], opts: AnalysisOptions) -> Result<KlReport> {
    let first = nets
        .first()
        .ok_or_else(|| Error::InvalidArgument("diversity report needs at least one network".into()))?;
    let colors = color_channels(first.1);
    if let Some((tag, _)) = nets.iter().find(|(_, n)| color_channels(n) != colors) {
        return Err(Error::BinAlignment(format!(
            "`{tag}` reads a different number of input channels than `{}`",
            first.0
        )));
    }
    let mut rows = Vec::new();
    let mut ranges = Vec::new();
    for channel in channels(colors) {
        let per_net: Vec<Vec<f64>> = nets
            .iter()
            .map(|(_, n)| collect_weights(n, channel))
            .collect::<Result<_>>()?;
        let a = per_net.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        let range = if a > 0.0 { (-a, a) } else { (-1.0, 1.0) };
        ranges.push((channel, range.0, range.1));
        for ((tag, net), values) in nets.iter().zip(&per_net) {
            let mut push = |stream: Option<usize>, values: &[f64]| -> Result<()> {
                let h = histogram(values, opts.bins, range)?;
                rows.push(KlRow {
                    tag: tag.clone(),
                    stream,
                    channel,
                    bins: opts.bins,
                    alpha: opts.alpha,
                    weights: values.len(),
                    kl: kl_divergence(&h, opts.bins, opts.alpha)?,
                });
                Ok(())
            };
            push(None, values)?;
            if matches!(net.spec().vertex, Vertex::V6 | Vertex::V8) && net.streams.len() > 1 {
                for s in 0..net.streams.len() {
                    push(Some(s), &stream_weights(net, s, channel))?;
                }
            }
        }
    }
    Ok(KlReport {
        rows,
        ranges,
        bins: opts.bins,
    })
}

/// Histogram CSV of one network over the report's shared ranges:
/// `channel,stream,bin,lo,hi,count` with `stream` empty for whole-network rows.
pub fn histogram_csv(net: &Network, report: &KlReport) -> Result<String> {
    let mut s = String::from("channel,stream,bin,lo,hi,count\n");
    for &(channel, lo, hi) in &report.ranges {
        let mut emit = |stream: Option<usize>, values: &[f64]| -> Result<()> {
            let h = histogram(values, report.bins, (lo, hi))?;
            let label = stream.map_or(String::new(), |i| i.to_string());
            for (i, c) in h.counts().iter().enumerate() {
                s.push_str(&format!("{channel},{label},{i},{},{},{c}\n", h.edges[i], h.edges[i + 1]));
            }
            Ok(())
        };
        emit(None, &collect_weights(net, channel)?)?;
        if net.streams.len() > 1 {
            for st in 0..net.streams.len() {
                emit(Some(st), &stream_weights(net, st, channel))?;
            }
        }
    }
    Ok(s)
}
