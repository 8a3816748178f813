use super::PcmStream;
use crate::{Error, Result};
use std::path::Path;

/// Writes mono 16-bit PCM; samples beyond full scale are clamped.
pub fn write_wav(pcm: &PcmStream, path: &Path) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: pcm.sample_rate.round() as u32,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(path, spec)?;
    for &x in &pcm.samples {
        w.write_sample((x.clamp(-1.0, 1.0) * i16::MAX as f64).round() as i16)?;
    }
    w.finalize()?;
    Ok(())
}

/// Reads mono 16-bit PCM starting at t = 0.
pub fn read_wav(path: &Path) -> Result<PcmStream> {
    let mut r = hound::WavReader::open(path)?;
    let spec = r.spec();
    if spec.channels != 1 || spec.bits_per_sample != 16 || spec.sample_format != hound::SampleFormat::Int {
        return Err(Error::invariant(
            "wav",
            format!(
                "expected mono 16-bit integer PCM, got {} channel(s) at {} bits",
                spec.channels, spec.bits_per_sample
            ),
        ));
    }
    let samples = r
        .samples::<i16>()
        .map(|s| s.map(|v| v as f64 / i16::MAX as f64))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(PcmStream::new(spec.sample_rate as f64, samples, 0.0))
}
