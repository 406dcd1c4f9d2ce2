use super::types::{Episode, WindowSample};

/// Cuts an episode into windows at t = k, k+stride, ... up to the last record.
///
/// Episodes with fewer than k+1 records produce no windows.
pub fn make_windows(episode: &Episode, k: usize, stride: usize) -> Vec<WindowSample> {
    assert!(k >= 1, "k must be at least 1");
    assert!(stride >= 1, "stride must be at least 1");
    let len = episode.records.len();
    if len < k + 1 {
        return Vec::new();
    }
    let dim = episode.obs_dim();
    (k..len)
        .step_by(stride)
        .map(|t| {
            let recs = &episode.records[t - k..=t];
            let mut frames = Vec::with_capacity((k + 1) * dim);
            for r in recs {
                frames.extend_from_slice(&r.obs);
            }
            let past = &recs[..k];
            WindowSample {
                frames,
                obs_dim: dim,
                past_angles: past.iter().map(|r| r.angle).collect(),
                past_speeds: past.iter().map(|r| r.speed).collect(),
                target_angle: recs[k].angle,
                target_speed: recs[k].speed,
                origin: (episode.id, episode.records[t].step_index),
            }
        })
        .collect()
}

/// Windows for many episodes, ordered by episode id then t.
pub fn windows_for<'a, I>(episodes: I, k: usize, stride: usize) -> Vec<WindowSample>
where
    I: IntoIterator<Item = &'a Episode>,
{
    let mut eps: Vec<&Episode> = episodes.into_iter().collect();
    eps.sort_by_key(|e| e.id);
    eps.into_iter().flat_map(|e| make_windows(e, k, stride)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::types::{EpisodeId, EpisodeMeta, TimedRecord};

    fn episode(len: usize) -> Episode {
        let records = (0..len)
            .map(|i| TimedRecord {
                step_index: i,
                obs: vec![i as f64, -(i as f64)],
                speed: 10.0 + i as f64,
                angle: i as f64,
            })
            .collect();
        Episode::new(EpisodeId(7), 1, records, EpisodeMeta::default()).unwrap()
    }

    #[test]
    fn six_records_give_two_windows() {
        let w = make_windows(&episode(6), 4, 1);
        assert_eq!(w.len(), 2);
        assert_eq!(w[0].t(), 4);
        assert_eq!(w[1].t(), 5);
    }

    #[test]
    fn five_records_give_one_window() {
        let w = make_windows(&episode(5), 4, 1);
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].t(), 4);
    }

    #[test]
    fn four_records_give_none() {
        assert!(make_windows(&episode(4), 4, 1).is_empty());
    }

    #[test]
    fn window_contents() {
        let w = &make_windows(&episode(8), 4, 1)[1];
        assert_eq!(w.t(), 5);
        assert_eq!(w.n_frames(), 5);
        assert_eq!(w.frame(0), &[1.0, -1.0]);
        assert_eq!(w.current_frame(), &[5.0, -5.0]);
        assert_eq!(w.past_angles, vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(w.past_speeds, vec![11.0, 12.0, 13.0, 14.0]);
        assert_eq!(w.target_angle, 5.0);
        assert_eq!(w.target_speed, 15.0);
    }

    #[test]
    fn stride_skips() {
        let w = make_windows(&episode(12), 4, 3);
        let ts: Vec<usize> = w.iter().map(|w| w.t()).collect();
        assert_eq!(ts, vec![4, 7, 10]);
    }
}
