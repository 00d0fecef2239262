"""Minimal SVG writers for scatter plots and label grids."""
import colorsys

SIZE = 400


def palette(n):
    cols = []
    for k in range(max(n, 1)):
        r, g, b = colorsys.hsv_to_rgb(k / max(n, 1), 0.65, 0.9)
        cols.append(f"#{int(r * 255):02x}{int(g * 255):02x}{int(b * 255):02x}")
    return cols


def _project(x, y, bounds):
    xmin, xmax, ymin, ymax = bounds
    return (x - xmin) / (xmax - xmin) * SIZE, SIZE - (y - ymin) / (ymax - ymin) * SIZE


def render(bounds, grid=None, points=(), labels=(), stars=(), n_classes=None):
    """Return SVG text: optional label grid as rectangles, points coloured by label."""
    n = n_classes or (int(max(list(labels) + [0])) + 1)
    if grid is not None:
        n = max(n, int(grid.max()) + 1)
    cols = palette(n)
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" '
           f'viewBox="0 0 {SIZE} {SIZE}">',
           f'<rect width="{SIZE}" height="{SIZE}" fill="white"/>']
    if grid is not None:
        ny, nx = grid.shape
        cw, ch = SIZE / nx, SIZE / ny
        for r in range(ny):
            for c in range(nx):
                out.append(f'<rect x="{c * cw:.2f}" y="{SIZE - (r + 1) * ch:.2f}" width="{cw:.2f}" '
                           f'height="{ch:.2f}" fill="{cols[grid[r, c]]}" fill-opacity="0.35"/>')
    for (x, y), lab in zip(points, labels):
        px, py = _project(x, y, bounds)
        out.append(f'<circle cx="{px:.2f}" cy="{py:.2f}" r="2.5" fill="{cols[int(lab)]}" '
                   'stroke="black" stroke-width="0.3"/>')
    for x, y in stars:
        px, py = _project(x, y, bounds)
        out.append(f'<circle cx="{px:.2f}" cy="{py:.2f}" r="5" fill="none" stroke="black"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
