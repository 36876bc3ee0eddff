use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_for;

/// Axis-aligned building footprint covering pixels `row0..row1` × `col0..col1`
/// (half-open). In continuous coordinates it occupies `[row0, row1] × [col0, col1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub row0: usize,
    pub col0: usize,
    pub row1: usize,
    pub col1: usize,
}

impl Rect {
    pub fn contains(&self, row: usize, col: usize) -> bool {
        row >= self.row0 && row < self.row1 && col >= self.col0 && col < self.col1
    }

    pub fn corners(&self) -> [(f64, f64); 4] {
        let (r0, c0, r1, c1) = (
            self.row0 as f64,
            self.col0 as f64,
            self.row1 as f64,
            self.col1 as f64,
        );
        [(r0, c0), (r0, c1), (r1, c0), (r1, c1)]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub height_px: usize,
    pub width_px: usize,
    /// Meters per pixel.
    pub cell_size: f64,
    /// Base station pixel as (row, col).
    pub bs_pos: (usize, usize),
    pub n_antennas: usize,
    pub buildings: Vec<Rect>,
    pub rng_seed: u64,
}

impl Scene {
    pub fn validate(&self) -> Result<()> {
        if self.height_px < 8 || self.width_px < 8 {
            return Err(Error::config(format!(
                "grid must be at least 8x8, got {}x{}",
                self.height_px, self.width_px
            )));
        }
        if self.n_antennas < 2 {
            return Err(Error::config("scene needs at least 2 antennas"));
        }
        if !(self.cell_size > 0.0) {
            return Err(Error::config("cell_size must be positive"));
        }
        let (br, bc) = self.bs_pos;
        if br >= self.height_px || bc >= self.width_px {
            return Err(Error::config("base station outside the grid"));
        }
        for b in &self.buildings {
            if b.row0 >= b.row1 || b.col0 >= b.col1 {
                return Err(Error::config(format!("empty building rectangle {b:?}")));
            }
            if b.row1 > self.height_px || b.col1 > self.width_px {
                return Err(Error::config(format!("building {b:?} leaves the grid")));
            }
            if b.contains(br, bc) {
                return Err(Error::config(format!("building {b:?} covers the base station")));
            }
        }
        Ok(())
    }

    pub fn is_indoor(&self, row: usize, col: usize) -> bool {
        self.buildings.iter().any(|b| b.contains(row, col))
    }

    /// Outdoor indicator, 1 outside every building.
    pub fn outdoor_mask(&self) -> Vec<f32> {
        let mut m = vec![1.0; self.height_px * self.width_px];
        for b in &self.buildings {
            for r in b.row0..b.row1 {
                for c in b.col0..b.col1 {
                    m[r * self.width_px + c] = 0.0;
                }
            }
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub height_px: usize,
    pub width_px: usize,
    pub cell_size: f64,
    pub n_antennas: usize,
    pub n_buildings: usize,
    pub min_building_px: usize,
    pub max_building_px: usize,
    /// Resampling attempts per rectangle before giving up.
    pub max_tries: usize,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            height_px: 32,
            width_px: 32,
            cell_size: 5.0,
            n_antennas: 8,
            n_buildings: 6,
            min_building_px: 3,
            max_building_px: 8,
            max_tries: 100,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.height_px < 8 || self.width_px < 8 {
            return Err(Error::config("grid must be at least 8x8"));
        }
        if self.n_antennas < 2 {
            return Err(Error::config("n_antennas must be >= 2"));
        }
        if self.min_building_px == 0 || self.min_building_px > self.max_building_px {
            return Err(Error::config("building size range is empty"));
        }
        if self.max_building_px > self.height_px.min(self.width_px) {
            return Err(Error::config("buildings larger than the grid"));
        }
        if self.max_tries == 0 {
            return Err(Error::config("max_tries must be >= 1"));
        }
        Ok(())
    }
}

/// Place a base station, then drop rectangles, resampling any that cover it.
pub fn generate_scene(seed: u64, cfg: &SceneConfig) -> Result<Scene> {
    cfg.validate()?;
    let mut rng = rng_for(seed, &[0x5CE4E]);
    let (h, w) = (cfg.height_px, cfg.width_px);
    let bs_pos = (rng.random_range(0..h), rng.random_range(0..w));

    let mut buildings = Vec::with_capacity(cfg.n_buildings);
    for _ in 0..cfg.n_buildings {
        let mut placed = None;
        for _ in 0..cfg.max_tries {
            let bh = rng.random_range(cfg.min_building_px..=cfg.max_building_px);
            let bw = rng.random_range(cfg.min_building_px..=cfg.max_building_px);
            let row0 = rng.random_range(0..=h - bh);
            let col0 = rng.random_range(0..=w - bw);
            let rect = Rect {
                row0,
                col0,
                row1: row0 + bh,
                col1: col0 + bw,
            };
            if !rect.contains(bs_pos.0, bs_pos.1) {
                placed = Some(rect);
                break;
            }
        }
        match placed {
            Some(r) => buildings.push(r),
            None => {
                return Err(Error::Placement {
                    tries: cfg.max_tries,
                })
            }
        }
    }

    Ok(Scene {
        height_px: h,
        width_px: w,
        cell_size: cfg.cell_size,
        bs_pos,
        n_antennas: cfg.n_antennas,
        buildings,
        rng_seed: seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_buildings_gives_empty_list() {
        let cfg = SceneConfig {
            n_buildings: 0,
            ..Default::default()
        };
        let s = generate_scene(1, &cfg).unwrap();
        assert!(s.buildings.is_empty());
        s.validate().unwrap();
    }

    #[test]
    fn same_seed_same_scene() {
        let cfg = SceneConfig::default();
        assert_eq!(generate_scene(3, &cfg).unwrap(), generate_scene(3, &cfg).unwrap());
        assert_ne!(generate_scene(3, &cfg).unwrap(), generate_scene(4, &cfg).unwrap());
    }

    #[test]
    fn five_buildings_in_bounds_and_clear_of_bs() {
        let cfg = SceneConfig {
            height_px: 64,
            width_px: 64,
            n_buildings: 5,
            ..Default::default()
        };
        let s = generate_scene(7, &cfg).unwrap();
        assert_eq!(s.buildings.len(), 5);
        for b in &s.buildings {
            assert!(b.row1 <= 64 && b.col1 <= 64 && b.row0 < b.row1 && b.col0 < b.col1);
            // containment checked pixel by pixel rather than through Rect::contains
            let (br, bc) = s.bs_pos;
            let covered = (b.row0..b.row1).any(|r| r == br) && (b.col0..b.col1).any(|c| c == bc);
            assert!(!covered);
        }
    }

    #[test]
    fn impossible_placement_fails() {
        // 8x8 buildings on an 8x8 grid always cover the base station.
        let cfg = SceneConfig {
            height_px: 8,
            width_px: 8,
            n_buildings: 1,
            min_building_px: 8,
            max_building_px: 8,
            max_tries: 5,
            ..Default::default()
        };
        assert!(matches!(
            generate_scene(1, &cfg),
            Err(Error::Placement { tries: 5 })
        ));
    }

    #[test]
    fn validate_rejects_bad_scenes() {
        let mut s = generate_scene(2, &SceneConfig::default()).unwrap();
        s.buildings.push(Rect {
            row0: s.bs_pos.0,
            col0: s.bs_pos.1,
            row1: s.bs_pos.0 + 1,
            col1: s.bs_pos.1 + 1,
        });
        assert!(s.validate().is_err());
        let mut s = generate_scene(2, &SceneConfig::default()).unwrap();
        s.n_antennas = 1;
        assert!(s.validate().is_err());
    }
}
