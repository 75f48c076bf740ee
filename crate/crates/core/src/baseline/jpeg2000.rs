//! JPEG 2000 framing for the conventional link.
//!
//! Images are coded as raw J2K codestreams (no JP2 box wrapper) through the
//! OpenJPEG reference library with in-memory streams. The encoder searches
//! the compression ratio so the codestream fits a fixed byte budget, strips
//! the comment marker the encoder inserts, and zero-pads to the frame size.

use std::ffi::c_void;
use std::mem::MaybeUninit;
use std::panic::{catch_unwind, AssertUnwindSafe};

use openjpeg_sys::*;

use crate::dataset::{ImageSample, IMAGE_CHANNELS, IMAGE_LEN, IMAGE_SIDE};
use crate::error::{Error, Result};

/// Number of DWT resolutions used by the encoder.
pub const RESOLUTIONS: i32 = 3;

const SOC: u16 = 0xff4f;
const SIZ: u16 = 0xff51;
const COM: u16 = 0xff64;
const SOT: u16 = 0xff90;

/// Bisection steps on the log compression ratio.
const SEARCH_STEPS: usize = 14;
const MAX_RATIO: f64 = 400.0;

/// Outcome of decoding one received frame.
#[derive(Debug, Clone, PartialEq)]
pub enum Decoded {
    /// Interleaved `(32, 32, 3)` pixels in `[0, 1]`.
    Image(Vec<f32>),
    /// The codestream could not be decoded.
    Failure(String),
}

impl Decoded {
    pub fn is_failure(&self) -> bool {
        matches!(self, Decoded::Failure(_))
    }

    pub fn image(&self) -> Option<&[f32]> {
        match self {
            Decoded::Image(px) => Some(px),
            Decoded::Failure(_) => None,
        }
    }
}

extern "C" fn quiet(_msg: *const std::ffi::c_char, _data: *mut c_void) {}

unsafe fn silence(codec: *mut opj_codec_t) {
    let null = std::ptr::null_mut();
    opj_set_info_handler(codec, Some(quiet), null);
    opj_set_warning_handler(codec, Some(quiet), null);
    opj_set_error_handler(codec, Some(quiet), null);
}

struct Sink {
    buf: Vec<u8>,
    pos: usize,
}

struct Source<'a> {
    buf: &'a [u8],
    pos: usize,
}

extern "C" fn sink_write(p_buffer: *mut c_void, nb_bytes: usize, p_data: *mut c_void) -> usize {
    let sink = unsafe { &mut *(p_data as *mut Sink) };
    let data = unsafe { std::slice::from_raw_parts(p_buffer as *const u8, nb_bytes) };
    let end = sink.pos + nb_bytes;
    if sink.buf.len() < end {
        sink.buf.resize(end, 0);
    }
    sink.buf[sink.pos..end].copy_from_slice(data);
    sink.pos = end;
    nb_bytes
}

extern "C" fn sink_skip(nb_bytes: i64, p_data: *mut c_void) -> i64 {
    let sink = unsafe { &mut *(p_data as *mut Sink) };
    let target = sink.pos as i64 + nb_bytes;
    if target < 0 {
        return -1;
    }
    sink.pos = target as usize;
    if sink.buf.len() < sink.pos {
        sink.buf.resize(sink.pos, 0);
    }
    nb_bytes
}

extern "C" fn sink_seek(offset: i64, p_data: *mut c_void) -> i32 {
    let sink = unsafe { &mut *(p_data as *mut Sink) };
    if offset < 0 {
        return 0;
    }
    sink.pos = offset as usize;
    if sink.buf.len() < sink.pos {
        sink.buf.resize(sink.pos, 0);
    }
    1
}

extern "C" fn source_read(p_buffer: *mut c_void, nb_bytes: usize, p_data: *mut c_void) -> usize {
    if p_buffer.is_null() || nb_bytes == 0 {
        return usize::MAX;
    }
    let src = unsafe { &mut *(p_data as *mut Source) };
    let left = src.buf.len() - src.pos;
    if left == 0 {
        return usize::MAX;
    }
    let n = left.min(nb_bytes);
    let out = unsafe { std::slice::from_raw_parts_mut(p_buffer as *mut u8, n) };
    out.copy_from_slice(&src.buf[src.pos..src.pos + n]);
    src.pos += n;
    n
}

extern "C" fn source_skip(nb_bytes: i64, p_data: *mut c_void) -> i64 {
    let src = unsafe { &mut *(p_data as *mut Source) };
    let target = (src.pos as i64 + nb_bytes).clamp(0, src.buf.len() as i64);
    let moved = target - src.pos as i64;
    src.pos = target as usize;
    moved
}

extern "C" fn source_seek(offset: i64, p_data: *mut c_void) -> i32 {
    let src = unsafe { &mut *(p_data as *mut Source) };
    if offset < 0 || offset as usize > src.buf.len() {
        return 0;
    }
    src.pos = offset as usize;
    1
}

/// Owns the codec, stream, and image handles of one call.
struct Handles {
    codec: *mut opj_codec_t,
    stream: *mut opj_stream_t,
    image: *mut opj_image_t,
}

impl Drop for Handles {
    fn drop(&mut self) {
        unsafe {
            if !self.codec.is_null() {
                opj_destroy_codec(self.codec);
            }
            if !self.stream.is_null() {
                opj_stream_destroy(self.stream);
            }
            if !self.image.is_null() {
                opj_image_destroy(self.image);
            }
        }
    }
}

/// Encodes at one compression ratio, returning the raw codestream.
fn encode_at_ratio(pixels: &[u8], ratio: f32) -> Result<Vec<u8>> {
    let side = IMAGE_SIDE as u32;
    let mut comps: Vec<opj_image_cmptparm_t> = (0..IMAGE_CHANNELS)
        .map(|_| opj_image_cmptparm_t {
            dx: 1,
            dy: 1,
            w: side,
            h: side,
            x0: 0,
            y0: 0,
            prec: 8,
            bpp: 8,
            sgnd: 0,
        })
        .collect();
    let image = unsafe {
        opj_image_create(IMAGE_CHANNELS as u32, comps.as_mut_ptr(), COLOR_SPACE::OPJ_CLRSPC_SRGB)
    };
    if image.is_null() {
        return Err(Error::Compression("image allocation failed".into()));
    }
    let mut h = Handles {
        codec: std::ptr::null_mut(),
        stream: std::ptr::null_mut(),
        image,
    };
    unsafe {
        let img = &mut *image;
        img.x0 = 0;
        img.y0 = 0;
        img.x1 = side;
        img.y1 = side;
        for c in 0..IMAGE_CHANNELS {
            let plane = std::slice::from_raw_parts_mut((*img.comps.add(c)).data, IMAGE_SIDE * IMAGE_SIDE);
            for (i, v) in plane.iter_mut().enumerate() {
                *v = pixels[i * IMAGE_CHANNELS + c] as i32;
            }
        }

        let mut params = MaybeUninit::<opj_cparameters_t>::zeroed();
        opj_set_default_encoder_parameters(params.as_mut_ptr());
        let mut params = params.assume_init();
        params.tcp_numlayers = 1;
        params.tcp_rates[0] = ratio;
        params.cp_disto_alloc = 1;
        params.irreversible = 1;
        params.numresolution = RESOLUTIONS;
        params.tcp_mct = 1;

        h.codec = opj_create_compress(CODEC_FORMAT::OPJ_CODEC_J2K);
        silence(h.codec);
        if opj_setup_encoder(h.codec, &mut params, image) == 0 {
            return Err(Error::Compression("encoder setup rejected".into()));
        }
        let sink = Box::into_raw(Box::new(Sink {
            buf: Vec::with_capacity(512),
            pos: 0,
        }));
        h.stream = opj_stream_default_create(0);
        opj_stream_set_write_function(h.stream, Some(sink_write));
        opj_stream_set_skip_function(h.stream, Some(sink_skip));
        opj_stream_set_seek_function(h.stream, Some(sink_seek));
        opj_stream_set_user_data(h.stream, sink as *mut c_void, None);

        let ok = opj_start_compress(h.codec, image, h.stream) != 0
            && opj_encode(h.codec, h.stream) != 0
            && opj_end_compress(h.codec, h.stream) != 0;
        opj_stream_destroy(h.stream);
        h.stream = std::ptr::null_mut();
        let sink = Box::from_raw(sink);
        if !ok {
            return Err(Error::Compression("encoder failed".into()));
        }
        Ok(sink.buf)
    }
}

/// Removes every comment segment from the main header.
pub fn strip_comments(stream: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(stream.len());
    if stream.len() < 2 || read_u16(stream, 0) != Some(SOC) {
        return stream.to_vec();
    }
    out.extend_from_slice(&stream[..2]);
    let mut pos = 2;
    while let Some(marker) = read_u16(stream, pos) {
        if marker == SOT {
            break;
        }
        let Some(len) = read_u16(stream, pos + 2) else {
            break;
        };
        let end = (pos + 2 + len as usize).min(stream.len());
        if marker != COM {
            out.extend_from_slice(&stream[pos..end]);
        }
        pos = end;
    }
    out.extend_from_slice(&stream[pos.min(stream.len())..]);
    out
}

fn read_u16(buf: &[u8], pos: usize) -> Option<u16> {
    buf.get(pos..pos + 2).map(|b| u16::from_be_bytes([b[0], b[1]]))
}

/// Codes `image` into exactly `target_bytes` bytes (codestream plus zero padding).
///
/// The highest-quality single-layer codestream that fits is kept. Fails with
/// [`Error::Compression`] when even the coarsest ratio tried overflows.
pub fn jpeg2000_compress(image: &ImageSample, target_bytes: usize) -> Result<Vec<u8>> {
    let pixels = image.bytes();
    let fit = |ratio: f64| -> Result<Option<Vec<u8>>> {
        let cs = strip_comments(&encode_at_ratio(pixels, ratio as f32)?);
        Ok((cs.len() <= target_bytes).then_some(cs))
    };
    let Some(mut best) = fit(MAX_RATIO)? else {
        return Err(Error::Compression(format!(
            "codestream does not fit {target_bytes} bytes even at ratio {MAX_RATIO}"
        )));
    };
    let (mut lo, mut hi) = (0.0f64, MAX_RATIO.ln());
    for _ in 0..SEARCH_STEPS {
        let mid = 0.5 * (lo + hi);
        match fit(mid.exp())? {
            Some(cs) => {
                best = cs;
                hi = mid;
            }
            None => lo = mid,
        }
    }
    best.resize(target_bytes, 0);
    Ok(best)
}

/// Checks the image-size segment against the one format the link carries.
fn check_siz(frame: &[u8]) -> std::result::Result<(), String> {
    if read_u16(frame, 0) != Some(SOC) || read_u16(frame, 2) != Some(SIZ) {
        return Err("missing start of codestream".into());
    }
    let siz = frame
        .get(4..4 + 2 + 36 + 3 * IMAGE_CHANNELS)
        .ok_or("truncated SIZ")?;
    let u32_at = |o: usize| u32::from_be_bytes([siz[o], siz[o + 1], siz[o + 2], siz[o + 3]]);
    let side = IMAGE_SIDE as u32;
    let lsiz = u16::from_be_bytes([siz[0], siz[1]]) as usize;
    let geometry = [u32_at(4), u32_at(8), u32_at(12), u32_at(16), u32_at(28), u32_at(32)];
    let csiz = u16::from_be_bytes([siz[36], siz[37]]) as usize;
    if lsiz != 38 + 3 * IMAGE_CHANNELS
        || geometry[..2] != [side, side]
        || geometry[2..4] != [0, 0]
        || u32_at(20) != side
        || u32_at(24) != side
        || geometry[4..] != [0, 0]
        || csiz != IMAGE_CHANNELS
    {
        return Err("unexpected image geometry".into());
    }
    for c in 0..IMAGE_CHANNELS {
        if siz[38 + 3 * c..41 + 3 * c] != [7, 1, 1] {
            return Err(format!("unexpected component {c} format"));
        }
    }
    Ok(())
}

fn decode_inner(frame: &[u8]) -> std::result::Result<Vec<f32>, String> {
    check_siz(frame)?;
    unsafe {
        let mut h = Handles {
            codec: opj_create_decompress(CODEC_FORMAT::OPJ_CODEC_J2K),
            stream: opj_stream_default_create(1),
            image: std::ptr::null_mut(),
        };
        silence(h.codec);
        let mut params = MaybeUninit::<opj_dparameters_t>::zeroed();
        opj_set_default_decoder_parameters(params.as_mut_ptr());
        let mut params = params.assume_init();
        if opj_setup_decoder(h.codec, &mut params) == 0 {
            return Err("decoder setup rejected".into());
        }
        let src = Box::into_raw(Box::new(Source { buf: frame, pos: 0 }));
        opj_stream_set_read_function(h.stream, Some(source_read));
        opj_stream_set_skip_function(h.stream, Some(source_skip));
        opj_stream_set_seek_function(h.stream, Some(source_seek));
        opj_stream_set_user_data_length(h.stream, frame.len() as u64);
        opj_stream_set_user_data(h.stream, src as *mut c_void, None);

        let ok = opj_read_header(h.stream, h.codec, &mut h.image) != 0
            && opj_decode(h.codec, h.stream, h.image) != 0;
        opj_stream_destroy(h.stream);
        h.stream = std::ptr::null_mut();
        drop(Box::from_raw(src));
        if !ok || h.image.is_null() {
            return Err("codestream rejected".into());
        }
        let img = &*h.image;
        if img.numcomps as usize != IMAGE_CHANNELS || img.comps.is_null() {
            return Err(format!("{} components decoded", img.numcomps));
        }
        let comps = std::slice::from_raw_parts(img.comps, IMAGE_CHANNELS);
        let n = IMAGE_SIDE * IMAGE_SIDE;
        let mut out = vec![0f32; IMAGE_LEN];
        for (c, comp) in comps.iter().enumerate() {
            if comp.w as usize != IMAGE_SIDE || comp.h as usize != IMAGE_SIDE || comp.data.is_null() {
                return Err("decoded component has the wrong size".into());
            }
            let plane = std::slice::from_raw_parts(comp.data, n);
            for (i, &v) in plane.iter().enumerate() {
                out[i * IMAGE_CHANNELS + c] = v.clamp(0, 255) as f32 / 255.0;
            }
        }
        Ok(out)
    }
}

/// Decodes a received frame; trailing zero padding is ignored by the codec.
///
/// Corrupted frames yield [`Decoded::Failure`], including frames that make
/// the codec panic.
pub fn jpeg2000_decompress(frame: &[u8]) -> Decoded {
    match catch_unwind(AssertUnwindSafe(|| decode_inner(frame))) {
        Ok(Ok(px)) => Decoded::Image(px),
        Ok(Err(reason)) => Decoded::Failure(reason),
        Err(_) => Decoded::Failure("codec panicked".into()),
    }
}

/// Nominal compression ratio of a raw CIFAR image to a frame, rounded.
pub fn nominal_ratio(target_bytes: usize) -> u32 {
    (IMAGE_LEN as f64 / target_bytes as f64).round() as u32
}
