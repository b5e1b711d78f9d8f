//! Planar floating-point images and conversions to and from tensors.

use std::path::Path;

use candle_core::{DType, Device, Tensor};

use crate::error::{Error, Result};

/// Planar (channel-major) image with `f32` samples, nominally in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuf {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f32>,
}

impl ImageBuf {
    pub fn zeros(width: usize, height: usize, channels: usize) -> Self {
        Self {
            width,
            height,
            channels,
            data: vec![0.0; width * height * channels],
        }
    }

    pub fn from_vec(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height * channels {
            return Err(Error::Shape(format!(
                "image buffer of {} samples does not match {channels}x{height}x{width}",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    /// Builds an image by evaluating `f(channel, x, y)` at every sample.
    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Self {
        let mut data = Vec::with_capacity(width * height * channels);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, x, y));
                }
            }
        }
        Self {
            width,
            height,
            channels,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn plane(&self, c: usize) -> &[f32] {
        let n = self.width * self.height;
        &self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn get(&self, c: usize, x: usize, y: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, x: usize, y: usize, v: f32) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    /// Luma conversion (ITU-R BT.601 weights); single-channel images pass through.
    pub fn to_gray(&self) -> ImageBuf {
        match self.channels {
            1 => self.clone(),
            3 => {
                let (r, g, b) = (self.plane(0), self.plane(1), self.plane(2));
                let data = r
                    .iter()
                    .zip(g)
                    .zip(b)
                    .map(|((r, g), b)| 0.299 * r + 0.587 * g + 0.114 * b)
                    .collect();
                ImageBuf {
                    width: self.width,
                    height: self.height,
                    channels: 1,
                    data,
                }
            }
            _ => {
                let n = self.width * self.height;
                let mut data = vec![0.0; n];
                for c in 0..self.channels {
                    for (d, s) in data.iter_mut().zip(self.plane(c)) {
                        *d += s / self.channels as f32;
                    }
                }
                ImageBuf {
                    width: self.width,
                    height: self.height,
                    channels: 1,
                    data,
                }
            }
        }
    }

    /// Bilinear sample with border clamping at continuous coordinates.
    pub fn sample_clamped(&self, c: usize, x: f32, y: f32) -> f32 {
        let x = x.clamp(0.0, (self.width - 1) as f32);
        let y = y.clamp(0.0, (self.height - 1) as f32);
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = x - x0 as f32;
        let fy = y - y0 as f32;
        let top = self.get(c, x0, y0) * (1.0 - fx) + self.get(c, x1, y0) * fx;
        let bottom = self.get(c, x0, y1) * (1.0 - fx) + self.get(c, x1, y1) * fx;
        top * (1.0 - fy) + bottom * fy
    }

    /// Bilinear resize using pixel-center alignment.
    pub fn resize(&self, width: usize, height: usize) -> ImageBuf {
        if width == self.width && height == self.height {
            return self.clone();
        }
        let sx = self.width as f32 / width as f32;
        let sy = self.height as f32 / height as f32;
        ImageBuf::from_fn(width, height, self.channels, |c, x, y| {
            let src_x = (x as f32 + 0.5) * sx - 0.5;
            let src_y = (y as f32 + 0.5) * sy - 0.5;
            self.sample_clamped(c, src_x, src_y)
        })
    }

    /// Halves both dimensions by 2x2 area averaging. Dimensions must be even.
    pub fn downsample2(&self) -> Result<ImageBuf> {
        if self.width % 2 != 0 || self.height % 2 != 0 {
            return Err(Error::InvalidArgument(format!(
                "cannot area-downsample odd dimensions {}x{}",
                self.width, self.height
            )));
        }
        Ok(ImageBuf::from_fn(
            self.width / 2,
            self.height / 2,
            self.channels,
            |c, x, y| {
                0.25 * (self.get(c, 2 * x, 2 * y)
                    + self.get(c, 2 * x + 1, 2 * y)
                    + self.get(c, 2 * x, 2 * y + 1)
                    + self.get(c, 2 * x + 1, 2 * y + 1))
            },
        ))
    }

    /// Single image as a `(1, C, H, W)` tensor.
    pub fn to_tensor(&self, dtype: DType, device: &Device) -> Result<Tensor> {
        Ok(Tensor::from_slice(
            &self.data,
            (1, self.channels, self.height, self.width),
            device,
        )?
        .to_dtype(dtype)?)
    }

    /// Loads an 8- or 16-bit PNG as RGB scaled to `[0, 1]`.
    pub fn load_png(path: &Path) -> Result<ImageBuf> {
        let img = image::open(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?;
        let rgb = img.to_rgb32f();
        let (w, h) = (rgb.width() as usize, rgb.height() as usize);
        let raw = rgb.into_raw();
        Ok(ImageBuf::from_fn(w, h, 3, |c, x, y| raw[(y * w + x) * 3 + c]))
    }

    /// Writes the image as an 8-bit PNG, clamping samples to `[0, 1]`.
    pub fn save_png(&self, path: &Path) -> Result<()> {
        let to_u8 = |v: f32| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
        let res = match self.channels {
            1 => {
                let buf: Vec<u8> = self.data.iter().map(|&v| to_u8(v)).collect();
                image::GrayImage::from_raw(self.width as u32, self.height as u32, buf)
                    .expect("buffer length matches dimensions")
                    .save(path)
            }
            _ => {
                let mut buf = Vec::with_capacity(self.width * self.height * 3);
                for y in 0..self.height {
                    for x in 0..self.width {
                        for c in 0..3 {
                            buf.push(to_u8(self.get(c.min(self.channels - 1), x, y)));
                        }
                    }
                }
                image::RgbImage::from_raw(self.width as u32, self.height as u32, buf)
                    .expect("buffer length matches dimensions")
                    .save(path)
            }
        };
        res.map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Stacks equally sized images into a `(B, C, H, W)` tensor.
pub fn stack_images(images: &[&ImageBuf], dtype: DType, device: &Device) -> Result<Tensor> {
    let first = images
        .first()
        .ok_or_else(|| Error::InvalidArgument("cannot stack an empty image list".into()))?;
    let mut data = Vec::with_capacity(first.data.len() * images.len());
    for img in images {
        if (img.width, img.height, img.channels) != (first.width, first.height, first.channels) {
            return Err(Error::Shape(format!(
                "image {}x{}x{} differs from {}x{}x{}",
                img.channels, img.height, img.width, first.channels, first.height, first.width
            )));
        }
        data.extend_from_slice(&img.data);
    }
    Ok(Tensor::from_vec(
        data,
        (images.len(), first.channels, first.height, first.width),
        device,
    )?
    .to_dtype(dtype)?)
}

/// Splits a `(B, C, H, W)` tensor back into images.
pub fn unstack_images(t: &Tensor) -> Result<Vec<ImageBuf>> {
    let (b, c, h, w) = t.dims4()?;
    let flat: Vec<f32> = t.to_dtype(DType::F32)?.flatten_all()?.to_vec1()?;
    let n = c * h * w;
    (0..b)
        .map(|i| ImageBuf::from_vec(w, h, c, flat[i * n..(i + 1) * n].to_vec()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gray_of_equal_channels_is_identity() {
        let img = ImageBuf::from_fn(4, 3, 3, |_, x, y| (x + y) as f32 / 10.0);
        let g = img.to_gray();
        for y in 0..3 {
            for x in 0..4 {
                assert!((g.get(0, x, y) - (x + y) as f32 / 10.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn downsample_averages_blocks() {
        let img = ImageBuf::from_vec(2, 2, 1, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        assert_eq!(img.downsample2().unwrap().data(), &[1.5]);
        assert!(ImageBuf::zeros(3, 2, 1).downsample2().is_err());
    }

    #[test]
    fn tensor_round_trip() {
        let a = ImageBuf::from_fn(5, 4, 3, |c, x, y| (c * 100 + y * 10 + x) as f32);
        let b = ImageBuf::from_fn(5, 4, 3, |c, x, y| (c + y + x) as f32);
        let t = stack_images(&[&a, &b], DType::F32, &Device::Cpu).unwrap();
        assert_eq!(t.dims(), &[2, 3, 4, 5]);
        let back = unstack_images(&t).unwrap();
        assert_eq!(back, vec![a, b]);
    }

    #[test]
    fn resize_of_constant_is_constant() {
        let img = ImageBuf::from_fn(8, 6, 1, |_, _, _| 0.25);
        let r = img.resize(5, 3);
        assert!(r.data().iter().all(|&v| (v - 0.25).abs() < 1e-7));
    }
}
