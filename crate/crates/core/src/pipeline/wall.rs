use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use super::scan::{Ctx, ScanCore};
use super::{Mode, ScanResult, SharedFrameBuffer};

/// Real producer and consumer threads. Each frame's simulated model latency
/// is slept, scaled by `wall_time_scale`. Results depend on thread timing.
pub(crate) fn run_wall(ctx: &Ctx) -> ScanResult {
    let (workers, capacity) = ctx.cfg.shape(ctx.profile.workers);
    let scale = ctx.cfg.wall_time_scale;
    let core = Mutex::new(ScanCore::new(ctx.session.give_up_ms().min(ctx.session.end_ms())));
    let buffer = SharedFrameBuffer::new(capacity.max(1));
    let idle = AtomicUsize::new(workers);
    let origin = Instant::now();
    let now_ms = || origin.elapsed().as_secs_f64() * 1000.0 / scale;
    let sleep_until = |t_ms: f64| {
        let target = Duration::from_secs_f64((t_ms * scale / 1000.0).max(0.0));
        if let Some(d) = target.checked_sub(origin.elapsed()) {
            std::thread::sleep(d);
        }
    };

    std::thread::scope(|s| {
        s.spawn(|| {
            for (i, f) in ctx.session.frames.iter().enumerate() {
                sleep_until(f.timestamp_ms);
                let mut c = core.lock().unwrap();
                c.advance_to(ctx, now_ms());
                if c.ended() || f.timestamp_ms >= c.horizon() {
                    break;
                }
                c.frames_produced += 1;
                // without a buffer, a frame is only taken by an idle worker
                if ctx.cfg.mode == Mode::Blocking && idle.load(Ordering::SeqCst) == 0 {
                    c.frames_dropped += 1;
                    continue;
                }
                drop(c);
                if buffer.push(i).is_some() {
                    core.lock().unwrap().frames_dropped += 1;
                }
            }
        });
        for _ in 0..workers {
            s.spawn(|| {
                while let Some(i) = buffer.pop_blocking() {
                    idle.fetch_sub(1, Ordering::SeqCst);
                    let start = now_ms();
                    let job = core.lock().unwrap().plan(ctx, i);
                    sleep_until(start + job.work_ms);
                    let mut c = core.lock().unwrap();
                    let t = now_ms();
                    c.advance_to(ctx, t);
                    if !c.ended() {
                        c.complete(ctx, job, t);
                    }
                    idle.fetch_add(1, Ordering::SeqCst);
                }
            });
        }
        loop {
            std::thread::sleep(Duration::from_millis(2));
            let mut c = core.lock().unwrap();
            c.advance_to(ctx, now_ms());
            if c.ended() {
                break;
            }
        }
        buffer.close();
    });
    core.into_inner().unwrap().finish(ctx)
}
