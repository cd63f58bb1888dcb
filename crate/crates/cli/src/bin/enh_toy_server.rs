//! Reference adapter server for the ENH1 and SCL1 protocols.
//!
//! Reads request frames on stdin and answers on stdout. The mode argument
//! selects the behaviour, including several deliberately broken ones used
//! to exercise client error handling:
//!
//! ```text
//! echo                 return the tile unchanged
//! l-gain <k>           scale L by k
//! wrong-shape          answer with a (D+1)x(D+1) tile
//! short-frame          send a truncated response, then exit
//! bad-magic            answer with an unknown magic
//! exit                 exit without answering
//! hang                 never answer
//! scl-const <p>        SCL1: constant probability map
//! scl-local-mean <t>   SCL1: 1 where the 3x3 mean of L/100 is below t
//! scl-wrong-shape      SCL1: map one row short
//! ```

use std::io::{self, Read, Write};
use std::process::ExitCode;
use std::time::Duration;

use tile_ensemble::adapter::{read_frame, serve, Frame, FrameKind};

fn arg_f32(args: &[String]) -> Result<f32, String> {
    args.first()
        .ok_or("missing numeric argument")?
        .parse()
        .map_err(|_| format!("not a number: {}", args[0]))
}

fn local_mean_mask(frame: &Frame, threshold: f32) -> Vec<f32> {
    let (h, w) = (frame.height as i64, frame.width as i64);
    let l = &frame.samples[..(h * w) as usize];
    let mut out = Vec::with_capacity(l.len());
    for y in 0..h {
        for x in 0..w {
            let mut s = 0.0f64;
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let yy = (y + dy).clamp(0, h - 1);
                    let xx = (x + dx).clamp(0, w - 1);
                    s += l[(yy * w + xx) as usize] as f64 / 100.0;
                }
            }
            out.push(if s / 9.0 < threshold as f64 { 1.0 } else { 0.0 });
        }
    }
    out
}

/// Answers the first request with `reply` and then exits.
fn reply_once(kind: FrameKind, reply: impl FnOnce(&Frame) -> Vec<u8>) -> Result<(), String> {
    let mut stdin = io::stdin().lock();
    if let Some(frame) = read_frame(&mut stdin, kind, true).map_err(|e| e.to_string())? {
        let mut out = io::stdout().lock();
        out.write_all(&reply(&frame)).map_err(|e| e.to_string())?;
        out.flush().map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn run(mode: &str, rest: &[String]) -> Result<(), String> {
    let enh = FrameKind::Enhance;
    let scl = FrameKind::Scale;
    let stdin = io::stdin();
    let stdout = io::stdout();
    match mode {
        "echo" => serve(stdin, stdout, enh, |f| Frame::enhance_response(f.height, f.channels, f.samples).encode()),
        "l-gain" => {
            let k = arg_f32(rest)?;
            serve(stdin, stdout, enh, move |mut f| {
                let n = (f.height * f.width) as usize;
                f.samples[..n].iter_mut().for_each(|v| *v = (*v * k).clamp(0.0, 100.0));
                Frame::enhance_response(f.height, f.channels, f.samples).encode()
            })
        }
        "wrong-shape" => serve(stdin, stdout, enh, |f| {
            let d = f.height + 1;
            Frame::enhance_response(d, f.channels, vec![50.0; (d * d * f.channels) as usize]).encode()
        }),
        "short-frame" => {
            return reply_once(enh, |f| {
                let full = Frame::enhance_response(f.height, f.channels, f.samples.clone()).encode();
                full[..full.len() / 2].to_vec()
            })
        }
        "bad-magic" => {
            return reply_once(enh, |f| {
                let mut bytes = Frame::enhance_response(f.height, f.channels, f.samples.clone()).encode();
                bytes[..4].copy_from_slice(b"NOPE");
                bytes
            })
        }
        "exit" => {
            let mut buf = [0u8; 4];
            let _ = io::stdin().read(&mut buf);
            std::process::exit(3);
        }
        "hang" => {
            let mut sink = Vec::new();
            let _ = io::stdin().read_to_end(&mut sink);
            loop {
                std::thread::sleep(Duration::from_secs(3600));
            }
        }
        "scl-const" => {
            let p = arg_f32(rest)?;
            serve(stdin, stdout, scl, move |f| {
                Frame::scale_response(f.height, f.width, vec![p; (f.height * f.width) as usize]).encode()
            })
        }
        "scl-local-mean" => {
            let t = arg_f32(rest)?;
            serve(stdin, stdout, scl, move |f| Frame::scale_response(f.height, f.width, local_mean_mask(&f, t)).encode())
        }
        "scl-wrong-shape" => serve(stdin, stdout, scl, |f| {
            let h = f.height.saturating_sub(1);
            Frame::scale_response(h, f.width, vec![0.5; (h * f.width) as usize]).encode()
        }),
        other => return Err(format!("unknown mode '{other}'")),
    }
    .map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let Some((mode, rest)) = args.split_first() else {
        eprintln!("usage: enh-toy-server <mode> [arg]");
        return ExitCode::from(2);
    };
    match run(mode, rest) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("enh-toy-server: {e}");
            ExitCode::FAILURE
        }
    }
}
