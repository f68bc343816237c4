use std::path::Path;

use image::{imageops, ImageBuffer, Rgb, Rgb32FImage, RgbImage};

use crate::{Error, Result};

/// An RGB frame stored row-major, channels last, values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    width: u32,
    height: u32,
    data: Vec<f32>,
}

impl Frame {
    pub fn new(width: u32, height: u32, data: Vec<f32>) -> Result<Self> {
        if data.len() != width as usize * height as usize * 3 {
            return Err(Error::Config(format!(
                "frame buffer of {} values does not match {width}x{height}x3",
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: u32, height: u32, value: f32) -> Self {
        Self { width, height, data: vec![value; width as usize * height as usize * 3] }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    #[inline]
    pub fn pixel(&self, x: u32, y: u32) -> [f32; 3] {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, x: u32, y: u32, rgb: [f32; 3]) {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Planar `[3, H, W]` copy, the layout the network consumes.
    pub fn to_chw(&self) -> Vec<f32> {
        let hw = self.width as usize * self.height as usize;
        let mut out = vec![0.0; hw * 3];
        for (p, px) in self.data.chunks_exact(3).enumerate() {
            for c in 0..3 {
                out[c * hw + p] = px[c];
            }
        }
        out
    }

    /// Bilinear (triangle filter) resize.
    pub fn resize(&self, width: u32, height: u32) -> Frame {
        if width == self.width && height == self.height {
            return self.clone();
        }
        let src: Rgb32FImage = ImageBuffer::from_raw(self.width, self.height, self.data.clone())
            .expect("buffer length checked at construction");
        let dst = imageops::resize(&src, width, height, imageops::FilterType::Triangle);
        Frame { width, height, data: dst.into_raw() }
    }

    pub fn to_rgb8(&self) -> RgbImage {
        let bytes = self.data.iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
        RgbImage::from_raw(self.width, self.height, bytes).expect("buffer length checked")
    }

    pub fn from_rgb8(img: &RgbImage) -> Frame {
        let data = img.as_raw().iter().map(|&b| b as f32 / 255.0).collect();
        Frame { width: img.width(), height: img.height(), data }
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        self.to_rgb8()
            .save_with_format(path, image::ImageFormat::Png)
            .map_err(|source| Error::Image { path: path.to_path_buf(), source })
    }

    pub fn load(path: &Path) -> Result<Frame> {
        let img = image::open(path).map_err(|source| Error::Image { path: path.to_path_buf(), source })?;
        Ok(Frame::from_rgb8(&img.to_rgb8()))
    }

    pub fn from_pixel_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> [f32; 3]) -> Frame {
        let img: ImageBuffer<Rgb<f32>, Vec<f32>> = ImageBuffer::from_fn(width, height, |x, y| Rgb(f(x, y)));
        Frame { width, height, data: img.into_raw() }
    }
}
