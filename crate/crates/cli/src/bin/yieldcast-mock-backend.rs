//! Mock model backend speaking the line protocol on stdin/stdout.
//!
//! Test switches:
//!   --hang-first <marker>  hang on the first fit_predict unless <marker> exists (creates it)
//!   --crash-on-fit         exit with status 3 on any fit_predict
//!   --reorder <n>          answer fit_predict requests in reversed batches of n
//!                          (a short batch is flushed once no more input is buffered)

use std::io::{BufRead, BufReader, Write};

use yieldcast_core::bridge::{handle_line, mock_fit_predict, Op, Request, Response};

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let mut hang_marker = None;
    let mut crash = false;
    let mut reorder = 1usize;
    let mut i = 0;
    while i < args.len() {
        match args[i].as_str() {
            "--hang-first" => {
                hang_marker = args.get(i + 1).cloned();
                i += 1;
            }
            "--crash-on-fit" => crash = true,
            "--reorder" => {
                reorder = args.get(i + 1).and_then(|v| v.parse().ok()).unwrap_or(1).max(1);
                i += 1;
            }
            other => {
                eprintln!("unknown argument {other}");
                std::process::exit(2);
            }
        }
        i += 1;
    }
    let mut input = BufReader::new(std::io::stdin());
    let mut out = std::io::stdout().lock();
    let mut held: Vec<Response> = Vec::new();
    let flush = |held: &mut Vec<Response>, out: &mut dyn Write| {
        for r in held.drain(..).rev() {
            let _ = out.write_all(r.to_line().as_bytes());
        }
        let _ = out.flush();
    };
    let mut line = String::new();
    loop {
        line.clear();
        match input.read_line(&mut line) {
            Ok(0) | Err(_) => break,
            Ok(_) => {}
        }
        if line.trim().is_empty() {
            continue;
        }
        let is_fit = serde_json::from_str::<Request>(&line).is_ok_and(|r| r.op == Op::FitPredict);
        if is_fit && crash {
            eprintln!("mock backend: crashing as requested");
            std::process::exit(3);
        }
        if is_fit {
            if let Some(marker) = &hang_marker {
                if !std::path::Path::new(marker).exists() {
                    let _ = std::fs::write(marker, b"hung");
                    loop {
                        std::thread::sleep(std::time::Duration::from_secs(3600));
                    }
                }
            }
        }
        let (resp, stop) = handle_line(&line, &mut mock_fit_predict);
        if is_fit && reorder > 1 {
            held.push(resp);
            // never sit on replies the client is waiting for
            if held.len() >= reorder || input.buffer().is_empty() {
                flush(&mut held, &mut out);
            }
            continue;
        }
        flush(&mut held, &mut out);
        let _ = out.write_all(resp.to_line().as_bytes());
        let _ = out.flush();
        if stop {
            break;
        }
    }
    flush(&mut held, &mut out);
}
