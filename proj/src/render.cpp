#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <csetjmp>

#include "tsexam/gateway.hpp"

namespace tsexam::gateway {

namespace {

struct Rgb {
    std::uint8_t r, g, b;
};

constexpr Rgb kWhite{255, 255, 255};
constexpr Rgb kBlack{0, 0, 0};
constexpr Rgb kLine{31, 119, 180};

// 3x5 glyphs, one row per entry, bit 2 = leftmost column.
constexpr std::array<std::array<std::uint8_t, 5>, 12> kGlyphs{{
    {7, 5, 5, 5, 7},  // 0
    {2, 6, 2, 2, 7},  // 1
    {7, 1, 7, 4, 7},  // 2
    {7, 1, 7, 1, 7},  // 3
    {5, 5, 7, 1, 1},  // 4
    {7, 4, 7, 1, 7},  // 5
    {7, 4, 7, 5, 7},  // 6
    {7, 1, 1, 1, 1},  // 7
    {7, 5, 7, 5, 7},  // 8
    {7, 5, 7, 1, 7},  // 9
    {0, 0, 7, 0, 0},  // -
    {0, 0, 0, 0, 2},  // .
}};

class Canvas {
public:
    Canvas(int w, int h) : w_(w), h_(h), px_(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), kWhite) {}

    void set(int x, int y, Rgb c) {
        if (x >= 0 && y >= 0 && x < w_ && y < h_) px_[static_cast<std::size_t>(y) * static_cast<std::size_t>(w_) + static_cast<std::size_t>(x)] = c;
    }

    void fill(int x0, int y0, int w, int h, Rgb c) {
        for (int y = y0; y < y0 + h; ++y) {
            for (int x = x0; x < x0 + w; ++x) set(x, y, c);
        }
    }

    // Bresenham with a square brush.
    void line(int x0, int y0, int x1, int y1, int thickness, Rgb c) {
        const int dx = std::abs(x1 - x0), sx = x0 < x1 ? 1 : -1;
        const int dy = -std::abs(y1 - y0), sy = y0 < y1 ? 1 : -1;
        int err = dx + dy;
        const int off = thickness / 2;
        while (true) {
            fill(x0 - off, y0 - off, thickness, thickness, c);
            if (x0 == x1 && y0 == y1) break;
            const int e2 = 2 * err;
            if (e2 >= dy) {
                err += dy;
                x0 += sx;
            }
            if (e2 <= dx) {
                err += dx;
                y0 += sy;
            }
        }
    }

    int text_width(const std::string& s, int scale) const { return static_cast<int>(s.size()) * 4 * scale - scale; }

    void text(int x, int y, const std::string& s, int scale, Rgb c) {
        for (char ch : s) {
            int g = -1;
            if (ch >= '0' && ch <= '9') g = ch - '0';
            if (ch == '-') g = 10;
            if (ch == '.') g = 11;
            if (g >= 0) {
                for (int row = 0; row < 5; ++row) {
                    for (int col = 0; col < 3; ++col) {
                        if (kGlyphs[static_cast<std::size_t>(g)][static_cast<std::size_t>(row)] & (4 >> col))
                            fill(x + col * scale, y + row * scale, scale, scale, c);
                    }
                }
            }
            x += 4 * scale;
        }
    }

    int width() const { return w_; }
    int height() const { return h_; }
    const std::vector<Rgb>& pixels() const { return px_; }

private:
    int w_, h_;
    std::vector<Rgb> px_;
};

double nice_step(double span, int target) {
    const double raw = span / target;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    const double f = raw / mag;
    const double nice = f < 1.5 ? 1 : f < 3 ? 2 : f < 7 ? 5 : 10;
    return nice * mag;
}

void draw_panel(Canvas& c, const TimeSeries& s, int top, int dpi) {
    const auto px = [dpi](double inches) { return static_cast<int>(std::lround(inches * dpi)); };
    const int t = std::max(1, dpi / 50);
    const int scale = std::max(1, dpi / 25);
    const int left = px(0.9), right = c.width() - px(0.2);
    const int y0 = top + px(0.15), y1 = top + px(3.0) - px(0.45);

    const auto& v = s.values;
    double lo = *std::min_element(v.begin(), v.end());
    double hi = *std::max_element(v.begin(), v.end());
    if (hi - lo < 1e-12) {
        lo -= 1.0;
        hi += 1.0;
    }
    const double pad = 0.05 * (hi - lo);
    lo -= pad;
    hi += pad;
    const double n = static_cast<double>(std::max<std::size_t>(v.size(), 2) - 1);
    const auto to_x = [&](double i) { return left + static_cast<int>(std::lround(i / n * (right - left))); };
    const auto to_y = [&](double y) { return y1 - static_cast<int>(std::lround((y - lo) / (hi - lo) * (y1 - y0))); };

    // Axes box.
    c.fill(left, y0, right - left + 1, t, kBlack);
    c.fill(left, y1, right - left + 1, t, kBlack);
    c.fill(left, y0, t, y1 - y0 + 1, kBlack);
    c.fill(right, y0, t, y1 - y0 + t, kBlack);

    const int tick = std::max(2, dpi / 12);
    const double xstep = std::max(1.0, nice_step(n, 8));
    for (double i = 0; i <= n + 1e-9; i += xstep) {
        const int x = to_x(i);
        c.fill(x, y1, t, tick, kBlack);
        const std::string label = format_decimal(i, 0);
        c.text(x - c.text_width(label, scale) / 2, y1 + tick + scale, label, scale, kBlack);
    }
    const double ystep = nice_step(hi - lo, 4);
    const int decimals = std::clamp(static_cast<int>(-std::floor(std::log10(ystep))), 0, 6);
    for (double y = std::ceil(lo / ystep) * ystep; y <= hi; y += ystep) {
        const int yy = to_y(y);
        c.fill(left - tick, yy, tick, t, kBlack);
        const std::string label = format_decimal(std::fabs(y) < ystep * 1e-9 ? 0.0 : y, decimals);
        c.text(left - tick - scale - c.text_width(label, scale), yy - 2 * scale, label, scale, kBlack);
    }

    if (v.size() == 1) {
        c.fill(to_x(0) - t, to_y(v[0]) - t, 2 * t + 1, 2 * t + 1, kLine);
        return;
    }
    for (std::size_t i = 1; i < v.size(); ++i)
        c.line(to_x(static_cast<double>(i - 1)), to_y(v[i - 1]), to_x(static_cast<double>(i)), to_y(v[i]), t, kLine);
}

void write_bytes(png_structp png, png_bytep data, png_size_t length) {
    auto* out = static_cast<std::string*>(png_get_io_ptr(png));
    out->append(reinterpret_cast<const char*>(data), length);
}

std::string encode_png(const Canvas& c) {
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw Error("png: cannot allocate writer");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw Error("png: cannot allocate info");
    }
    std::string out;
    std::vector<png_bytep> rows(static_cast<std::size_t>(c.height()));
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw Error("png: encoding failed");
    }
    png_set_write_fn(png, &out, write_bytes, nullptr);
    png_set_IHDR(png, info, static_cast<png_uint_32>(c.width()), static_cast<png_uint_32>(c.height()), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_set_compression_level(png, 6);
    png_set_filter(png, 0, PNG_FILTER_SUB);
    const auto* base = reinterpret_cast<const std::uint8_t*>(c.pixels().data());
    for (int y = 0; y < c.height(); ++y)
        rows[static_cast<std::size_t>(y)] =
            const_cast<png_bytep>(base + static_cast<std::size_t>(y) * static_cast<std::size_t>(c.width()) * 3);
    png_write_info(png, info);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return out;
}

}  // namespace

std::string render_plot(const std::vector<TimeSeries>& series, int dpi) {
    if (series.empty()) throw InvalidParameter("series", "at least one series required");
    if (dpi <= 0 || dpi > 1200) throw InvalidParameter("dpi", "must be in [1, 1200]");
    for (const auto& s : series) {
        if (s.values.empty()) throw InvalidParameter("series", "series must be non-empty");
        for (double v : s.values) {
            if (!std::isfinite(v)) throw InvalidParameter("series", "values must be finite");
        }
    }
    static_assert(sizeof(Rgb) == 3);
    const int panel = 3 * dpi;
    Canvas canvas(10 * dpi, panel * static_cast<int>(series.size()));
    for (std::size_t i = 0; i < series.size(); ++i) draw_panel(canvas, series[i], static_cast<int>(i) * panel, dpi);
    return encode_png(canvas);
}

}  // namespace tsexam::gateway
