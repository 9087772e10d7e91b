def format_percent(fraction):
    """Turn an accuracy fraction into a fixed-width percentage string."""
    return '%6.2f %%' % (fraction*100.0)


def format_steps(steps):
    """Turn a high step count into a human-readable string."""
    if steps >= 1e6:
        return '%6.2f M steps' % (steps/1e6)
    elif steps >= 1e3:
        return '%6.2f k steps' % (steps/1e3)
    else:
        return '%6d steps' % steps


def format_time(seconds):
    """Turn a high seconds value into a human-readable string."""
    m = seconds // 60
    s = seconds % 60
    if m >= 60:
        return '%d:%02d:%02d' % (m // 60, m % 60, s)
    elif m == 0:
        return '%2d s' % s
    else:
        return '%1d:%02d' % (m, s)


def format_lr(lr):
    return '%.4g' % lr


def format_budget(consumed, single):
    """Express a step count as a multiple of one full training."""
    if single == 0:
        return format_steps(consumed)
    return f'{consumed} steps = {consumed/single:g} x single training'
