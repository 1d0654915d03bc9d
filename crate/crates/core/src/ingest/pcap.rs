//! Nexmon CSI extraction from classic libpcap captures.
//!
//! Nexmon ships each CSI report as a UDP datagram. The payload layout used
//! by the bcm43455c0 build is:
//!
//! ```text
//! u16 magic (0x1111) | i8 rssi | u8 frame control | u8[6] source MAC
//! u16 sequence | u16 core/spatial | u16 chanspec | u16 chip version
//! K x (i16 re, i16 im), little-endian
//! ```
//!
//! Offsets are carried by [`NexmonLayout`] so other firmware builds can be
//! read without code changes. pcapng is not supported.

use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::CsiMatrix;

pub const DEFAULT_UDP_PORT: u16 = 5500;
pub const DEFAULT_CENTER_HZ: f64 = 5.18e9;
pub const DEFAULT_BANDWIDTH_HZ: f64 = 40e6;

const PCAP_MAGIC_USEC: u32 = 0xa1b2_c3d4;
const PCAP_MAGIC_NSEC: u32 = 0xa1b2_3c4d;

const LINKTYPE_ETHERNET: u32 = 1;
const LINKTYPE_RAW: u32 = 101;
const LINKTYPE_LINUX_SLL: u32 = 113;

/// Byte offsets inside the Nexmon UDP payload.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct NexmonLayout {
    pub magic: u16,
    pub magic_offset: usize,
    pub rssi_offset: usize,
    pub seq_offset: usize,
    pub core_spatial_offset: usize,
    pub chanspec_offset: usize,
    pub chip_offset: usize,
    /// Start of the interleaved i16 (re, im) pairs.
    pub csi_offset: usize,
}

impl Default for NexmonLayout {
    fn default() -> Self {
        Self {
            magic: 0x1111,
            magic_offset: 0,
            rssi_offset: 2,
            seq_offset: 10,
            core_spatial_offset: 12,
            chanspec_offset: 14,
            chip_offset: 16,
            csi_offset: 18,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcapSource {
    pub path: PathBuf,
    pub udp_port: u16,
    pub expected_subcarriers: usize,
    pub layout: NexmonLayout,
    /// Used when the chanspec field cannot be decoded.
    pub default_center_hz: f64,
    pub default_bandwidth_hz: f64,
}

impl PcapSource {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self {
            path: path.into(),
            udp_port: DEFAULT_UDP_PORT,
            expected_subcarriers: 128,
            layout: NexmonLayout::default(),
            default_center_hz: DEFAULT_CENTER_HZ,
            default_bandwidth_hz: DEFAULT_BANDWIDTH_HZ,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.udp_port == 0 {
            return Err(Error::Config("udp_port must be in 1..=65535".into()));
        }
        if ![64, 128, 256, 512].contains(&self.expected_subcarriers) {
            return Err(Error::Config(format!(
                "expected_subcarriers must be one of 64, 128, 256, 512 (got {})",
                self.expected_subcarriers
            )));
        }
        Ok(())
    }
}

/// Per-capture accounting of what was kept and why the rest was dropped.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ParseReport {
    pub packets: usize,
    pub accepted: usize,
    /// Capture or IP/UDP length fields promise more bytes than are present.
    pub truncated: usize,
    /// CSI body is not a whole number of i16 pairs.
    pub malformed: usize,
    /// Well-formed frames with a different subcarrier count.
    pub mismatched: usize,
    /// Packets that are not Nexmon frames on the configured port.
    pub non_csi: usize,
}

impl ParseReport {
    pub fn skipped_count(&self) -> usize {
        self.truncated + self.malformed + self.mismatched
    }
}

#[derive(Debug, Clone)]
pub struct PcapCapture {
    pub matrix: CsiMatrix,
    pub report: ParseReport,
    pub chanspec: Option<u16>,
}

/// Decoded Broadcom (d11ac) chanspec.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelInfo {
    pub channel: u8,
    pub center_hz: f64,
    pub bandwidth_hz: f64,
}

/// Decodes a d11ac chanspec: channel in bits 0-7, bandwidth in bits 11-13,
/// band in bits 14-15. Returns `None` for values outside the known encodings.
pub fn decode_chanspec(chanspec: u16) -> Option<ChannelInfo> {
    let channel = (chanspec & 0x00ff) as u8;
    if channel == 0 {
        return None;
    }
    let bandwidth_hz = match chanspec & 0x3800 {
        0x1000 => 20e6,
        0x1800 => 40e6,
        0x2000 => 80e6,
        0x2800 => 160e6,
        _ => return None,
    };
    let center_mhz = match chanspec & 0xc000 {
        0x0000 if channel == 14 => 2484.0,
        0x0000 if channel < 14 => 2407.0 + 5.0 * channel as f64,
        0xc000 => 5000.0 + 5.0 * channel as f64,
        _ => return None,
    };
    Some(ChannelInfo {
        channel,
        center_hz: center_mhz * 1e6,
        bandwidth_hz,
    })
}

/// Uniform subcarrier grid centred on `center_hz`, index 0 lowest.
pub fn subcarrier_freqs(center_hz: f64, bandwidth_hz: f64, subcarriers: usize) -> Vec<f64> {
    let spacing = bandwidth_hz / subcarriers as f64;
    let half = (subcarriers / 2) as f64;
    (0..subcarriers)
        .map(|k| center_hz + (k as f64 - half) * spacing)
        .collect()
}

#[derive(Clone, Copy)]
struct Endian {
    big: bool,
}

impl Endian {
    fn u32(self, b: &[u8]) -> u32 {
        let a: [u8; 4] = b[..4].try_into().unwrap();
        if self.big {
            u32::from_be_bytes(a)
        } else {
            u32::from_le_bytes(a)
        }
    }
}

enum Udp<'a> {
    Payload { dst_port: u16, data: &'a [u8] },
    Truncated { dst_port: u16 },
    NotUdp,
}

fn be16(b: &[u8], at: usize) -> u16 {
    u16::from_be_bytes([b[at], b[at + 1]])
}

fn le16(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

/// Walks link, IPv4 and UDP headers down to the UDP payload.
fn extract_udp(linktype: u32, pkt: &[u8], capture_truncated: bool) -> Udp<'_> {
    let ip_start = match linktype {
        LINKTYPE_ETHERNET => {
            if pkt.len() < 14 {
                return Udp::NotUdp;
            }
            let mut off = 12;
            let mut ethertype = be16(pkt, off);
            while ethertype == 0x8100 || ethertype == 0x88a8 {
                off += 4;
                if pkt.len() < off + 2 {
                    return Udp::NotUdp;
                }
                ethertype = be16(pkt, off);
            }
            if ethertype != 0x0800 {
                return Udp::NotUdp;
            }
            off + 2
        }
        LINKTYPE_LINUX_SLL => {
            if pkt.len() < 16 || be16(pkt, 14) != 0x0800 {
                return Udp::NotUdp;
            }
            16
        }
        LINKTYPE_RAW => 0,
        _ => return Udp::NotUdp,
    };
    let ip = &pkt[ip_start.min(pkt.len())..];
    if ip.len() < 20 || ip[0] >> 4 != 4 {
        return Udp::NotUdp;
    }
    let ihl = ((ip[0] & 0x0f) as usize) * 4;
    if ihl < 20 || ip[9] != 17 {
        return Udp::NotUdp;
    }
    // Non-first fragments carry no UDP header.
    if be16(ip, 6) & 0x1fff != 0 {
        return Udp::NotUdp;
    }
    if ip.len() < ihl + 8 {
        return if capture_truncated { Udp::Truncated { dst_port: 0 } } else { Udp::NotUdp };
    }
    let udp = &ip[ihl..];
    let dst_port = be16(udp, 2);
    let udp_len = be16(udp, 4) as usize;
    let ip_total = be16(ip, 2) as usize;
    if udp_len < 8 || ip_total < ihl + udp_len.min(8) {
        return Udp::NotUdp;
    }
    if capture_truncated || udp.len() < udp_len || ip.len() < ip_total {
        return Udp::Truncated { dst_port };
    }
    Udp::Payload {
        dst_port,
        data: &udp[8..udp_len],
    }
}

/// Reads a classic pcap file and assembles accepted CSI frames into a
/// `K x T` matrix, frames as columns in capture order.
pub fn parse_pcap(src: &PcapSource) -> Result<PcapCapture> {
    src.validate()?;
    let bytes = fs::read(&src.path).map_err(|e| Error::io(&src.path, e))?;
    parse_pcap_bytes(&bytes, src)
}

pub fn parse_pcap_bytes(bytes: &[u8], src: &PcapSource) -> Result<PcapCapture> {
    let path = &src.path;
    if bytes.len() < 24 {
        return Err(Error::NotPcap(path.clone()));
    }
    let magic_le = u32::from_le_bytes(bytes[..4].try_into().unwrap());
    let magic_be = u32::from_be_bytes(bytes[..4].try_into().unwrap());
    let (endian, nanos) = match (magic_le, magic_be) {
        (PCAP_MAGIC_USEC, _) => (Endian { big: false }, false),
        (PCAP_MAGIC_NSEC, _) => (Endian { big: false }, true),
        (_, PCAP_MAGIC_USEC) => (Endian { big: true }, false),
        (_, PCAP_MAGIC_NSEC) => (Endian { big: true }, true),
        _ => return Err(Error::NotPcap(path.clone())),
    };
    let linktype = endian.u32(&bytes[20..24]) & 0x0fff_ffff;

    let layout = &src.layout;
    let k = src.expected_subcarriers;
    let mut report = ParseReport::default();
    let mut columns: Vec<Vec<Complex64>> = Vec::new();
    let mut chanspec = None;
    let mut first_ts = None;
    let mut last_ts = 0.0;

    let mut pos = 24;
    while pos + 16 <= bytes.len() {
        let ts_sec = endian.u32(&bytes[pos..]) as f64;
        let ts_frac = endian.u32(&bytes[pos + 4..]) as f64;
        let incl_len = endian.u32(&bytes[pos + 8..]) as usize;
        let orig_len = endian.u32(&bytes[pos + 12..]) as usize;
        pos += 16;
        let end = (pos + incl_len).min(bytes.len());
        let pkt = &bytes[pos..end];
        let capture_truncated = pkt.len() < orig_len;
        pos = end;
        report.packets += 1;

        let (data, dst_port) = match extract_udp(linktype, pkt, capture_truncated) {
            Udp::Payload { dst_port, data } => (Some(data), dst_port),
            Udp::Truncated { dst_port } => (None, dst_port),
            Udp::NotUdp => {
                report.non_csi += 1;
                continue;
            }
        };
        if dst_port != src.udp_port && dst_port != 0 {
            report.non_csi += 1;
            continue;
        }
        let Some(data) = data else {
            report.truncated += 1;
            continue;
        };
        if data.len() < layout.magic_offset + 2 || le16(data, layout.magic_offset) != layout.magic {
            report.non_csi += 1;
            continue;
        }
        if data.len() < layout.csi_offset {
            report.truncated += 1;
            continue;
        }
        let body = &data[layout.csi_offset..];
        if body.len() % 4 != 0 {
            report.malformed += 1;
            continue;
        }
        if body.len() / 4 != k {
            report.mismatched += 1;
            continue;
        }
        if chanspec.is_none() && data.len() >= layout.chanspec_offset + 2 {
            chanspec = Some(le16(data, layout.chanspec_offset));
        }
        let column = body
            .chunks_exact(4)
            .map(|c| {
                let re = i16::from_le_bytes([c[0], c[1]]);
                let im = i16::from_le_bytes([c[2], c[3]]);
                Complex64::new(re as f64, im as f64)
            })
            .collect();
        columns.push(column);
        let ts = ts_sec + ts_frac * if nanos { 1e-9 } else { 1e-6 };
        first_ts.get_or_insert(ts);
        last_ts = ts;
        report.accepted += 1;
    }

    let t = columns.len();
    if t == 0 {
        let candidates = report.truncated + report.malformed + report.mismatched;
        if report.truncated > 0 && report.truncated == candidates {
            return Err(Error::AllFramesTruncated {
                path: path.clone(),
                count: report.truncated,
            });
        }
        return Err(Error::NoCsiFrames(path.clone()));
    }
    if t < 2 {
        return Err(Error::TooFewFrames {
            path: path.clone(),
            accepted: t,
        });
    }

    let info = chanspec.and_then(decode_chanspec);
    let (center, bw) = info
        .map(|i| (i.center_hz, i.bandwidth_hz))
        .unwrap_or((src.default_center_hz, src.default_bandwidth_hz));
    let freqs = subcarrier_freqs(center, bw, k);

    let mut values = Vec::with_capacity(k * t);
    for sub in 0..k {
        values.extend(columns.iter().map(|c| c[sub]));
    }
    let mut matrix = CsiMatrix::new(k, t, freqs, values)?;
    let span = last_ts - first_ts.unwrap_or(last_ts);
    if span > 0.0 {
        matrix.sample_rate_hint = Some((t - 1) as f64 / span);
    }
    matrix.meta.source_id = path.display().to_string();
    matrix.meta.channel_spec = match info {
        Some(i) => format!("ch{}/{}MHz", i.channel, i.bandwidth_hz / 1e6),
        None => format!("default {}MHz/{}MHz", center / 1e6, bw / 1e6),
    };
    Ok(PcapCapture {
        matrix,
        report,
        chanspec,
    })
}

/// One CSI report to be written by [`write_fixture`].
#[derive(Debug, Clone)]
pub struct FixtureFrame {
    pub csi: Vec<(i16, i16)>,
    pub chanspec: u16,
    pub seq: u16,
    pub dst_port: u16,
    /// Bytes cut from the end of the packet as captured (the pcap record
    /// still reports the full original length).
    pub truncate_by: usize,
}

impl FixtureFrame {
    pub fn new(csi: Vec<(i16, i16)>) -> Self {
        Self {
            csi,
            chanspec: 0xd826,
            seq: 0,
            dst_port: DEFAULT_UDP_PORT,
            truncate_by: 0,
        }
    }
}

/// Builds the Nexmon UDP payload for one frame.
pub fn nexmon_payload(frame: &FixtureFrame, layout: &NexmonLayout) -> Vec<u8> {
    let mut p = vec![0u8; layout.csi_offset];
    p[layout.magic_offset..layout.magic_offset + 2].copy_from_slice(&layout.magic.to_le_bytes());
    p[layout.rssi_offset] = (-40i8) as u8;
    p[layout.seq_offset..layout.seq_offset + 2].copy_from_slice(&frame.seq.to_le_bytes());
    p[layout.chanspec_offset..layout.chanspec_offset + 2].copy_from_slice(&frame.chanspec.to_le_bytes());
    p[layout.chip_offset..layout.chip_offset + 2].copy_from_slice(&0x4345u16.to_le_bytes());
    for &(re, im) in &frame.csi {
        p.extend_from_slice(&re.to_le_bytes());
        p.extend_from_slice(&im.to_le_bytes());
    }
    p
}

/// Serializes frames as an Ethernet/IPv4/UDP classic pcap (microsecond
/// timestamps, one frame per millisecond).
pub fn fixture_bytes(frames: &[FixtureFrame], layout: &NexmonLayout) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&PCAP_MAGIC_USEC.to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&4u16.to_le_bytes());
    out.extend_from_slice(&0i32.to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    out.extend_from_slice(&65535u32.to_le_bytes());
    out.extend_from_slice(&LINKTYPE_ETHERNET.to_le_bytes());

    for (i, frame) in frames.iter().enumerate() {
        let payload = nexmon_payload(frame, layout);
        let udp_len = 8 + payload.len();
        let ip_len = 20 + udp_len;
        let mut pkt = Vec::with_capacity(14 + ip_len);
        pkt.extend_from_slice(&[0xff; 6]);
        pkt.extend_from_slice(&[0x02, 0, 0, 0, 0, 0x01]);
        pkt.extend_from_slice(&0x0800u16.to_be_bytes());
        pkt.extend_from_slice(&[0x45, 0]);
        pkt.extend_from_slice(&(ip_len as u16).to_be_bytes());
        pkt.extend_from_slice(&[0, 0, 0x40, 0, 64, 17, 0, 0]);
        pkt.extend_from_slice(&[10, 10, 10, 10, 255, 255, 255, 255]);
        pkt.extend_from_slice(&5500u16.to_be_bytes());
        pkt.extend_from_slice(&frame.dst_port.to_be_bytes());
        pkt.extend_from_slice(&(udp_len as u16).to_be_bytes());
        pkt.extend_from_slice(&0u16.to_be_bytes());
        pkt.extend_from_slice(&payload);

        let orig_len = pkt.len();
        pkt.truncate(orig_len.saturating_sub(frame.truncate_by));
        out.extend_from_slice(&(i as u32 / 1000).to_le_bytes());
        out.extend_from_slice(&((i as u32 % 1000) * 1000).to_le_bytes());
        out.extend_from_slice(&(pkt.len() as u32).to_le_bytes());
        out.extend_from_slice(&(orig_len as u32).to_le_bytes());
        out.extend_from_slice(&pkt);
    }
    out
}

pub fn write_fixture(path: impl AsRef<Path>, frames: &[FixtureFrame], layout: &NexmonLayout) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, fixture_bytes(frames, layout)).map_err(|e| Error::io(path, e))
}
