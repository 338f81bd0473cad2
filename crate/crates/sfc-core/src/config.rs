//! Text configuration files: `key = value` lines, `#` comments.
//!
//! The projection fields are required reading for every tool; the network
//! fields are optional and only consulted when a forward pass is involved.
//!
//! ```text
//! # 64-beam geometry
//! height = 64
//! width = 1800
//! fov_up_deg = 3.0
//! fov_down_deg = 25.0
//! wrap_azimuth = true
//!
//! # network (optional)
//! base_channels = 32
//! num_classes = 19
//! bn_eps = 1e-5
//! stride_h = 2
//! stride_w = 2
//! normalize = kitti64
//! ```

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{NormStats, SphericalConfig};
use crate::network::NetworkConfig;

/// Parsed configuration file.
#[derive(Debug, Clone)]
pub struct FileConfig {
    pub spherical: SphericalConfig,
    pub base_channels: usize,
    pub num_classes: usize,
    pub bn_eps: f64,
    pub strides: (usize, usize),
    pub blocks_per_layer: [usize; 4],
    pub normalize: Option<NormStats>,
}

impl FileConfig {
    /// 64-beam defaults with the desk-scale network shape (width 32, two
    /// blocks per extraction layer). The full model is `base_channels =
    /// 128` with `blocks = 3,3,5,2`.
    pub fn default_beam64() -> Self {
        FileConfig {
            spherical: SphericalConfig::beam64(),
            base_channels: 32,
            num_classes: 19,
            bn_eps: 1e-5,
            strides: (2, 2),
            blocks_per_layer: [2, 2, 2, 2],
            normalize: Some(NormStats::semantic_kitti()),
        }
    }

    pub fn network_config(&self) -> Result<NetworkConfig> {
        NetworkConfig::new(
            self.spherical,
            self.base_channels,
            self.num_classes,
            self.bn_eps,
            self.strides,
            self.blocks_per_layer,
            self.normalize,
        )
    }
}

pub fn parse_config(text: &str) -> Result<FileConfig> {
    let mut fields: HashMap<String, String> = HashMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::BadConfig(format!(
                "line {}: expected `key = value`",
                lineno + 1
            )));
        };
        fields.insert(key.trim().to_string(), value.trim().to_string());
    }
    let defaults = FileConfig::default_beam64();

    fn get_num<T: std::str::FromStr>(
        fields: &HashMap<String, String>,
        key: &str,
        default: T,
    ) -> Result<T> {
        match fields.get(key) {
            None => Ok(default),
            Some(text) => text
                .parse::<T>()
                .map_err(|_| Error::BadConfig(format!("bad value for `{key}`: {text}"))),
        }
    }

    let height = get_num(&fields, "height", defaults.spherical.height)?;
    let width = get_num(&fields, "width", defaults.spherical.width)?;
    let fov_up_deg = get_num(
        &fields,
        "fov_up_deg",
        defaults.spherical.fov_up.to_degrees(),
    )?;
    let fov_down_deg = get_num(
        &fields,
        "fov_down_deg",
        defaults.spherical.fov_down.to_degrees(),
    )?;
    let wrap_azimuth = match fields.get("wrap_azimuth").map(String::as_str) {
        None => defaults.spherical.wrap_azimuth,
        Some("true") | Some("1") => true,
        Some("false") | Some("0") => false,
        Some(other) => {
            return Err(Error::BadConfig(format!(
                "bad value for `wrap_azimuth`: {other}"
            )))
        }
    };
    let normalize = match fields.get("normalize").map(String::as_str) {
        None | Some("kitti64") => Some(NormStats::semantic_kitti()),
        Some("none") => None,
        Some(other) => {
            return Err(Error::BadConfig(format!(
                "bad value for `normalize`: {other} (kitti64 or none)"
            )))
        }
    };
    let blocks_per_layer = match fields.get("blocks") {
        None => defaults.blocks_per_layer,
        Some(text) => {
            let counts: Vec<usize> = text
                .split(',')
                .map(|t| t.trim().parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::BadConfig(format!("bad value for `blocks`: {text}")))?;
            counts
                .try_into()
                .map_err(|_| Error::BadConfig("`blocks` needs four counts".into()))?
        }
    };
    Ok(FileConfig {
        spherical: SphericalConfig::from_degrees(
            height,
            width,
            fov_up_deg,
            fov_down_deg,
            wrap_azimuth,
        )?,
        base_channels: get_num(&fields, "base_channels", defaults.base_channels)?,
        num_classes: get_num(&fields, "num_classes", defaults.num_classes)?,
        bn_eps: get_num(&fields, "bn_eps", defaults.bn_eps)?,
        strides: (
            get_num(&fields, "stride_h", defaults.strides.0)?,
            get_num(&fields, "stride_w", defaults.strides.1)?,
        ),
        blocks_per_layer,
        normalize,
    })
}

pub fn read_config(path: &Path) -> Result<FileConfig> {
    parse_config(&std::fs::read_to_string(path)?)
}
