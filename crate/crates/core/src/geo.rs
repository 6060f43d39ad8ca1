//! Geodesic primitives and a local planar frame.
//!
//! Distances on the sphere use the IUGG mean Earth radius (6371.0088 km).
//! Planar work (hex lattice, noise, segment projection) happens in an
//! equirectangular frame anchored at a region centroid, which is affine in
//! lat/lon and therefore exactly invertible. Regions crossing the
//! antimeridian are not supported.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean Earth radius in kilometres (IUGG).
pub const EARTH_RADIUS_KM: f64 = 6371.0088;

/// Metres per degree of latitude used by [`LocalFrame`].
pub const METERS_PER_DEG_LAT: f64 = 111_320.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    /// Validated constructor.
    pub fn new(lat: f64, lon: f64) -> Result<Self> {
        let p = GeoPoint { lat, lon };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.lat.is_finite() || !self.lon.is_finite() {
            return Err(Error::invalid(format!(
                "non-finite coordinate ({}, {})",
                self.lat, self.lon
            )));
        }
        if !(-90.0..=90.0).contains(&self.lat) || !(-180.0..=180.0).contains(&self.lon) {
            return Err(Error::invalid(format!(
                "coordinate out of range ({}, {})",
                self.lat, self.lon
            )));
        }
        Ok(())
    }
}

/// Great-circle distance in kilometres (haversine formula).
pub fn haversine_km(a: GeoPoint, b: GeoPoint) -> Result<f64> {
    a.validate()?;
    b.validate()?;
    Ok(haversine_km_unchecked(a, b))
}

/// Haversine without input validation, for hot loops over already
/// validated points.
#[inline]
pub fn haversine_km_unchecked(a: GeoPoint, b: GeoPoint) -> f64 {
    let (lat1, lat2) = (a.lat.to_radians(), b.lat.to_radians());
    let dlat = lat2 - lat1;
    let dlon = (b.lon - a.lon).to_radians();
    let s = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * s.sqrt().min(1.0).asin()
}

/// Equirectangular projection around `origin`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalFrame {
    pub origin: GeoPoint,
    pub meters_per_deg_lat: f64,
    pub meters_per_deg_lon: f64,
}

impl LocalFrame {
    /// Frame anchored at `origin`.
    pub fn at(origin: GeoPoint) -> Result<Self> {
        origin.validate()?;
        let meters_per_deg_lon = METERS_PER_DEG_LAT * origin.lat.to_radians().cos();
        if meters_per_deg_lon <= 0.0 {
            return Err(Error::invalid("frame origin at a pole"));
        }
        Ok(LocalFrame {
            origin,
            meters_per_deg_lat: METERS_PER_DEG_LAT,
            meters_per_deg_lon,
        })
    }

    #[inline]
    pub fn to_local(&self, p: GeoPoint) -> (f64, f64) {
        (
            (p.lon - self.origin.lon) * self.meters_per_deg_lon,
            (p.lat - self.origin.lat) * self.meters_per_deg_lat,
        )
    }

    #[inline]
    pub fn from_local(&self, x: f64, y: f64) -> GeoPoint {
        GeoPoint {
            lat: self.origin.lat + y / self.meters_per_deg_lat,
            lon: self.origin.lon + x / self.meters_per_deg_lon,
        }
    }

    /// Planar distance between two points, metres.
    pub fn distance_m(&self, a: GeoPoint, b: GeoPoint) -> f64 {
        let (ax, ay) = self.to_local(a);
        let (bx, by) = self.to_local(b);
        (ax - bx).hypot(ay - by)
    }
}

/// Axis-aligned lat/lon box, `min` is the south-west corner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub min: GeoPoint,
    pub max: GeoPoint,
}

impl BBox {
    pub fn new(min: GeoPoint, max: GeoPoint) -> Result<Self> {
        min.validate()?;
        max.validate()?;
        if !(min.lat < max.lat && min.lon < max.lon) {
            return Err(Error::invalid(format!(
                "degenerate bbox ({}, {})-({}, {})",
                min.lat, min.lon, max.lat, max.lon
            )));
        }
        Ok(BBox { min, max })
    }

    /// Smallest box containing all points; may be degenerate.
    pub fn enclosing(points: impl IntoIterator<Item = GeoPoint>) -> Option<Self> {
        let mut it = points.into_iter();
        let first = it.next()?;
        let (mut min, mut max) = (first, first);
        for p in it {
            min.lat = min.lat.min(p.lat);
            min.lon = min.lon.min(p.lon);
            max.lat = max.lat.max(p.lat);
            max.lon = max.lon.max(p.lon);
        }
        Some(BBox { min, max })
    }

    pub fn centroid(&self) -> GeoPoint {
        GeoPoint {
            lat: (self.min.lat + self.max.lat) / 2.0,
            lon: (self.min.lon + self.max.lon) / 2.0,
        }
    }

    pub fn contains(&self, p: GeoPoint) -> bool {
        (self.min.lat..=self.max.lat).contains(&p.lat)
            && (self.min.lon..=self.max.lon).contains(&p.lon)
    }

    /// Grow each side by `frac` of the box extent.
    pub fn expanded(&self, frac: f64) -> Self {
        let dlat = (self.max.lat - self.min.lat) * frac;
        let dlon = (self.max.lon - self.min.lon) * frac;
        BBox {
            min: GeoPoint {
                lat: self.min.lat - dlat,
                lon: self.min.lon - dlon,
            },
            max: GeoPoint {
                lat: self.max.lat + dlat,
                lon: self.max.lon + dlon,
            },
        }
    }

    pub fn clamp(&self, p: GeoPoint) -> GeoPoint {
        GeoPoint {
            lat: p.lat.clamp(self.min.lat, self.max.lat),
            lon: p.lon.clamp(self.min.lon, self.max.lon),
        }
    }
}

/// Local frame centred on a non-degenerate region.
pub fn frame_for_region(bbox: (GeoPoint, GeoPoint)) -> Result<LocalFrame> {
    let bbox = BBox::new(bbox.0, bbox.1)?;
    LocalFrame::at(bbox.centroid())
}
